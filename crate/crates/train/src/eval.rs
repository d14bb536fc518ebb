use hdrtv_color::EncodedFrame;
use hdrtv_data::{window, SequencePair, TrainingSample};
use hdrtv_metrics::{score_frame, MetricReport};
use hdrtv_model::{DslNet, Mode};
use hdrtv_tensor::{concat_batch, Tensor};

use crate::TrainError;

/// `[1, 3, h', w']` tensor of `frame`, extended to `h' × w'` by repeating the
/// last row and column.
pub fn frame_to_tensor(frame: &EncodedFrame, h2: usize, w2: usize) -> Tensor {
    let (h, w) = frame.extents();
    assert!(h2 >= h && w2 >= w);
    let mut data = Vec::with_capacity(3 * h2 * w2);
    for c in 0..3 {
        let plane = frame.plane(c);
        for y in 0..h2 {
            let row = &plane[y.min(h - 1) * w..(y.min(h - 1) + 1) * w];
            data.extend_from_slice(row);
            data.extend(std::iter::repeat_n(row[w - 1], w2 - w));
        }
    }
    Tensor::from_vec([1, 3, h2, w2], data).expect("positive extents")
}

/// Top-left `h × w` of image `n` of a 3-channel tensor.
pub fn tensor_to_frame(t: &Tensor, n: usize, h: usize, w: usize) -> Result<EncodedFrame, TrainError> {
    let [_, c, th, tw] = t.shape();
    if c != 3 || h > th || w > tw {
        return Err(TrainError::Config(format!("cannot read a {h}x{w} frame from {:?}", t.shape())));
    }
    let src = &t.data()[n * 3 * th * tw..(n + 1) * 3 * th * tw];
    let mut data = Vec::with_capacity(3 * h * w);
    for c in 0..3 {
        for y in 0..h {
            data.extend_from_slice(&src[(c * th + y) * tw..(c * th + y) * tw + w]);
        }
    }
    Ok(EncodedFrame::new(h, w, data)?)
}

/// Stacks the samples into per-frame `[B, 3, p, p]` inputs and the target.
pub fn batch_tensors(samples: &[TrainingSample]) -> Result<(Vec<Tensor>, Tensor), TrainError> {
    let one = |f: &EncodedFrame| Tensor::from_vec([1, 3, f.height(), f.width()], f.data().to_vec());
    let frames = (0..samples[0].x.len())
        .map(|k| concat_batch(&samples.iter().map(|s| one(&s.x[k])).collect::<Result<Vec<_>, _>>()?))
        .collect::<Result<Vec<_>, _>>()?;
    let target = concat_batch(&samples.iter().map(|s| one(&s.y)).collect::<Result<Vec<_>, _>>()?)?;
    Ok((frames, target))
}

/// Maps a window of `2t+1` SDR frames to the HDR centre frame.
pub trait Predictor {
    fn radius(&self) -> usize;
    fn predict(&self, window: &[&EncodedFrame]) -> Result<EncodedFrame, TrainError>;
}

impl Predictor for DslNet {
    fn radius(&self) -> usize {
        self.config().t
    }

    /// Inference at any extent: the window is padded up to the model's extent
    /// multiple by edge replication and the result cropped back.
    fn predict(&self, window: &[&EncodedFrame]) -> Result<EncodedFrame, TrainError> {
        let (h, w) = window[0].extents();
        let m = self.config().extent_multiple();
        let (h2, w2) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        let frames: Vec<Tensor> = window.iter().map(|f| frame_to_tensor(f, h2, w2)).collect();
        let out = self.forward(&frames, Mode::Inference)?;
        tensor_to_frame(&out, 0, h, w)
    }
}

/// Returns the SDR centre frame unchanged.
#[derive(Debug, Clone, Copy)]
pub struct Passthrough {
    pub t: usize,
}

impl Predictor for Passthrough {
    fn radius(&self) -> usize {
        self.t
    }

    fn predict(&self, window: &[&EncodedFrame]) -> Result<EncodedFrame, TrainError> {
        Ok(window[self.t].clone())
    }
}

/// Prediction for frame `i` of `seq`.
pub fn predict_frame(p: &impl Predictor, seq: &SequencePair, i: usize) -> Result<EncodedFrame, TrainError> {
    p.predict(&window(seq, i, p.radius())?)
}

/// Scores every frame of every sequence, each as the centre of its own
/// window, at full resolution. Frames are numbered consecutively across
/// sequences.
pub fn evaluate(p: &impl Predictor, scenes: &[SequencePair]) -> Result<MetricReport, TrainError> {
    let mut scores = Vec::new();
    for seq in scenes {
        for i in 0..seq.len() {
            let pred = predict_frame(p, seq, i)?;
            scores.push(score_frame(scores.len(), &pred, &seq.hdr[i])?);
        }
    }
    Ok(MetricReport::new(scores))
}
