use std::fmt::Write as _;

/// PSNR written for identical frames, and the ceiling applied before averaging.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub index: usize,
    /// Uncapped; `+∞` for identical frames.
    pub psnr_db: f64,
    pub srsim: f64,
    pub delta_e_itp: f64,
}

impl FrameScore {
    pub fn capped_psnr(&self) -> f64 {
        self.psnr_db.min(PSNR_CAP_DB)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReportError {
    #[error("report line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

/// Per-frame scores plus their arithmetic means.
///
/// Text form, one record per line:
///
/// ```text
/// frame 0 psnr 31.250000 srsim 0.981234 deitp 12.345678
/// mean frames 1 psnr 31.250000 srsim 0.981234 deitp 12.345678
/// ```
///
/// PSNR is capped at [`PSNR_CAP_DB`] both in the frame lines and before
/// averaging.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub per_frame: Vec<FrameScore>,
}

impl MetricReport {
    pub fn new(per_frame: Vec<FrameScore>) -> Self {
        MetricReport { per_frame }
    }

    /// (psnr, srsim, deitp) means, or `None` for an empty report.
    pub fn mean(&self) -> Option<(f64, f64, f64)> {
        if self.per_frame.is_empty() {
            return None;
        }
        let n = self.per_frame.len() as f64;
        let (p, s, d) = self
            .per_frame
            .iter()
            .fold((0.0, 0.0, 0.0), |(p, s, d), f| (p + f.capped_psnr(), s + f.srsim, d + f.delta_e_itp));
        Some((p / n, s / n, d / n))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.per_frame {
            let _ = writeln!(
                out,
                "frame {} psnr {:.6} srsim {:.6} deitp {:.6}",
                f.index,
                f.capped_psnr(),
                f.srsim,
                f.delta_e_itp
            );
        }
        if let Some((p, s, d)) = self.mean() {
            let _ = writeln!(out, "mean frames {} psnr {p:.6} srsim {s:.6} deitp {d:.6}", self.per_frame.len());
        }
        out
    }

    /// Reads the frame lines back; the footer is recomputed, not trusted.
    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let mut per_frame = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let tok: Vec<&str> = line.split_whitespace().collect();
            let err = |detail: &str| ReportError::Parse { line: i + 1, detail: detail.to_string() };
            match tok.first() {
                None | Some(&"mean") => continue,
                Some(&"frame") => {}
                Some(other) => return Err(err(&format!("unknown record {other:?}"))),
            }
            if tok.len() != 8 || tok[2] != "psnr" || tok[4] != "srsim" || tok[6] != "deitp" {
                return Err(err("expected `frame <i> psnr <v> srsim <v> deitp <v>`"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(&format!("not a number: {s}")));
            per_frame.push(FrameScore {
                index: tok[1].parse().map_err(|_| err("bad frame index"))?,
                psnr_db: num(tok[3])?,
                srsim: num(tok[5])?,
                delta_e_itp: num(tok[7])?,
            });
        }
        Ok(MetricReport { per_frame })
    }
}
