use nalgebra::{Matrix3, Vector3};
use std::sync::OnceLock;

use crate::ColorError;

pub type Mat3 = Matrix3<f64>;

/// CIE 1931 xy chromaticities of R, G, B.
pub const BT709_PRIMARIES: [[f64; 2]; 3] = [[0.640, 0.330], [0.300, 0.600], [0.150, 0.060]];
pub const BT2020_PRIMARIES: [[f64; 2]; 3] = [[0.708, 0.292], [0.170, 0.797], [0.131, 0.046]];
pub const D65: [f64; 2] = [0.3127, 0.3290];

#[rustfmt::skip]
/// Linear BT.2020 RGB to LMS (BT.2100, integer form over 4096).
pub const LMS_FROM_BT2020: Mat3 = Matrix3::new(
    1688.0 / 4096.0, 2146.0 / 4096.0, 262.0 / 4096.0,
    683.0 / 4096.0, 2951.0 / 4096.0, 462.0 / 4096.0,
    99.0 / 4096.0, 309.0 / 4096.0, 3688.0 / 4096.0,
);

#[rustfmt::skip]
/// PQ-encoded L'M'S' to I, Ct, Cp (BT.2100).
pub const ICTCP_FROM_LMS: Mat3 = Matrix3::new(
    0.5, 0.5, 0.0,
    6610.0 / 4096.0, -13613.0 / 4096.0, 7003.0 / 4096.0,
    17933.0 / 4096.0, -17390.0 / 4096.0, -543.0 / 4096.0,
);

fn xyz_of(xy: [f64; 2]) -> Vector3<f64> {
    Vector3::new(xy[0] / xy[1], 1.0, (1.0 - xy[0] - xy[1]) / xy[1])
}

/// Normalized primary matrix: columns are the primaries scaled so that
/// RGB (1,1,1) maps to the white point with Y = 1.
pub fn rgb_to_xyz(primaries: [[f64; 2]; 3], white: [f64; 2]) -> Mat3 {
    let p = Matrix3::from_columns(&[xyz_of(primaries[0]), xyz_of(primaries[1]), xyz_of(primaries[2])]);
    let s = p.try_inverse().expect("primaries are not collinear") * xyz_of(white);
    p * Matrix3::from_diagonal(&s)
}

struct Gamut {
    to_2020: Mat3,
    to_709: Mat3,
}

fn gamut() -> &'static Gamut {
    static G: OnceLock<Gamut> = OnceLock::new();
    G.get_or_init(|| {
        check_conditioning().expect("built-in color matrices are well conditioned");
        let to_2020 = rgb_to_xyz(BT2020_PRIMARIES, D65).try_inverse().unwrap() * rgb_to_xyz(BT709_PRIMARIES, D65);
        let to_709 = to_2020.try_inverse().unwrap();
        Gamut { to_2020, to_709 }
    })
}

pub fn bt709_to_bt2020_matrix() -> Mat3 {
    gamut().to_2020
}

pub fn bt2020_to_bt709_matrix() -> Mat3 {
    gamut().to_709
}

/// Every fixed matrix must have a determinant clear of zero.
pub fn check_conditioning() -> Result<(), ColorError> {
    let named = [
        ("LMS_FROM_BT2020", LMS_FROM_BT2020),
        ("ICTCP_FROM_LMS", ICTCP_FROM_LMS),
        ("BT709 RGB->XYZ", rgb_to_xyz(BT709_PRIMARIES, D65)),
        ("BT2020 RGB->XYZ", rgb_to_xyz(BT2020_PRIMARIES, D65)),
    ];
    for (name, m) in named {
        let det = m.determinant();
        if det.abs() <= 1e-9 || !det.is_finite() {
            return Err(ColorError::Singular { name, det });
        }
    }
    Ok(())
}
