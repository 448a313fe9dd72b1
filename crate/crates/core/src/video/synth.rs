use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

/// Frames rendered per synthetic clip.
pub const SYNTH_FRAMES: usize = 16;

pub const COLORS: [&str; 4] = ["red", "green", "blue", "yellow"];
pub const COLOR_RGB: [[f64; 3]; 4] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
];
pub const DIRECTIONS: [&str; 4] = ["right", "left", "up", "down"];

/// A clip of RGB frames, `[T x 3 x H x W]`, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    frames: Tensor,
}

impl Video {
    pub fn new(frames: Tensor) -> Result<Self> {
        let s = frames.shape();
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::Dimension(format!(
                "video frames must be [T x 3 x H x W], got {s:?}"
            )));
        }
        if let Some(v) = frames.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.shape()[0]
    }

    /// `(H, W)` in pixels.
    pub fn frame_size(&self) -> (usize, usize) {
        (self.frames.shape()[2], self.frames.shape()[3])
    }

    /// One frame as a `[3 x H x W]` tensor.
    pub fn frame(&self, t: usize) -> Tensor {
        let (h, w) = self.frame_size();
        let n = 3 * h * w;
        Tensor::new(vec![3, h, w], self.frames.data()[t * n..(t + 1) * n].to_vec())
            .expect("frame slice shape")
    }

    /// New clip made of the given frames (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Video> {
        let (h, w) = self.frame_size();
        let n = 3 * h * w;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &t in indices {
            if t >= self.frame_count() {
                return Err(Error::Dimension(format!(
                    "frame index {t} out of range for {} frames",
                    self.frame_count()
                )));
            }
            data.extend_from_slice(&self.frames.data()[t * n..(t + 1) * n]);
        }
        Video::new(Tensor::new(vec![indices.len(), 3, h, w], data)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuestionKind {
    /// Answerable from any single frame (the square's color).
    Spatial,
    /// Needs the frame order (the motion direction).
    Temporal,
}

/// Four-way multiple-choice question with exactly one correct choice.
#[derive(Clone, Debug, PartialEq)]
pub struct Question {
    pub kind: QuestionKind,
    pub text: String,
    pub choices: [String; 4],
    pub answer: usize,
}

impl Question {
    pub fn answer_text(&self) -> &str {
        &self.choices[self.answer]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSample {
    pub video: Video,
    pub caption: String,
    pub questions: Vec<Question>,
    pub color: usize,
    pub direction: usize,
}

impl SynthSample {
    /// Rebuild a sample's text fields from its clip and attribute ids.
    pub fn from_attributes(video: Video, color: usize, direction: usize) -> Result<Self> {
        if color >= COLORS.len() || direction >= DIRECTIONS.len() {
            return Err(Error::Argument(format!(
                "attribute ids out of range: color {color}, direction {direction}"
            )));
        }
        Ok(Self {
            video,
            caption: caption_for(color, direction),
            questions: questions_for(color, direction),
            color,
            direction,
        })
    }

    pub fn question(&self, kind: QuestionKind) -> &Question {
        self.questions
            .iter()
            .find(|q| q.kind == kind)
            .expect("every sample carries both question kinds")
    }
}

pub fn caption_for(color: usize, direction: usize) -> String {
    format!("a {} square moving {}", COLORS[color], DIRECTIONS[direction])
}

fn questions_for(color: usize, direction: usize) -> Vec<Question> {
    vec![
        Question {
            kind: QuestionKind::Spatial,
            text: "What color is the square?".into(),
            choices: COLORS.map(String::from),
            answer: color,
        },
        Question {
            kind: QuestionKind::Temporal,
            text: "Which way does it move?".into(),
            choices: DIRECTIONS.map(String::from),
            answer: direction,
        },
    ]
}

/// Length of the overlap of `[a0, a1)` and `[b0, b1)`.
fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Random color, direction and start position, then [`render_sample`].
pub fn gen_synth_sample(rng: &mut Rng, grid_px: usize) -> SynthSample {
    let color = rng.below(COLORS.len());
    let direction = rng.below(DIRECTIONS.len());
    render_sample(rng, grid_px, color, direction)
}

/// Render a `SYNTH_FRAMES`-frame clip of one colored square translating in
/// a cardinal direction on a black `grid_px x grid_px` canvas.
///
/// The square has side `grid_px / 4` and travels `grid_px / 2` pixels in
/// total at constant speed, starting from a random position that keeps it
/// fully inside the frame. Pixels hold the color scaled by the fraction of
/// the pixel the square covers, so sub-pixel motion is visible.
pub fn render_sample(rng: &mut Rng, grid_px: usize, color: usize, direction: usize) -> SynthSample {
    assert!(grid_px >= 8, "grid_px must be >= 8");
    assert!(color < COLORS.len() && direction < DIRECTIONS.len());
    let g = grid_px as f64;
    let side = g / 4.0;
    let travel = g / 2.0;
    let slack = g - side - travel;
    let along = rng.uniform() * slack;
    let across = rng.uniform() * (g - side);
    let step = travel / (SYNTH_FRAMES - 1) as f64;
    // (x, y) of the top-left corner at frame t; x grows rightwards, y downwards.
    let corner = |t: usize| -> (f64, f64) {
        let d = step * t as f64;
        match direction {
            0 => (along + d, across),
            1 => (along + travel - d, across),
            2 => (across, along + travel - d),
            _ => (across, along + d),
        }
    };
    let rgb = COLOR_RGB[color];
    let plane = grid_px * grid_px;
    let mut data = vec![0.0; SYNTH_FRAMES * 3 * plane];
    for t in 0..SYNTH_FRAMES {
        let (x, y) = corner(t);
        for r in 0..grid_px {
            let cy = overlap(r as f64, r as f64 + 1.0, y, y + side);
            if cy == 0.0 {
                continue;
            }
            for c in 0..grid_px {
                let cov = cy * overlap(c as f64, c as f64 + 1.0, x, x + side);
                for (ch, &level) in rgb.iter().enumerate() {
                    data[(t * 3 + ch) * plane + r * grid_px + c] = (level * cov).min(1.0);
                }
            }
        }
    }
    let frames = Tensor::new(vec![SYNTH_FRAMES, 3, grid_px, grid_px], data)
        .expect("synthetic frame shape");
    SynthSample {
        video: Video::new(frames).expect("rendered values lie in [0, 1]"),
        caption: caption_for(color, direction),
        questions: questions_for(color, direction),
        color,
        direction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Intensity-weighted (row, column) centroid of one frame.
    fn centroid(v: &Video, t: usize) -> (f64, f64) {
        let f = v.frame(t);
        let (h, w) = v.frame_size();
        let (mut m, mut sr, mut sc) = (0.0, 0.0, 0.0);
        for ch in 0..3 {
            for r in 0..h {
                for c in 0..w {
                    let p = f.data()[(ch * h + r) * w + c];
                    m += p;
                    sr += p * r as f64;
                    sc += p * c as f64;
                }
            }
        }
        (sr / m, sc / m)
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = gen_synth_sample(&mut Rng::new(7), 16);
        let b = gen_synth_sample(&mut Rng::new(7), 16);
        assert_eq!(a, b);
    }

    #[test]
    fn centroids_move_in_the_stated_direction() {
        for dir in 0..4 {
            for seed in 0..5 {
                let s = render_sample(&mut Rng::new(seed), 16, seed as usize % 4, dir);
                let cs: Vec<_> = (0..SYNTH_FRAMES).map(|t| centroid(&s.video, t)).collect();
                for w in cs.windows(2) {
                    let (dr, dc) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                    let ok = match dir {
                        0 => dc > 0.0 && dr.abs() < 1e-9,
                        1 => dc < 0.0 && dr.abs() < 1e-9,
                        2 => dr < 0.0 && dc.abs() < 1e-9,
                        _ => dr > 0.0 && dc.abs() < 1e-9,
                    };
                    assert!(ok, "dir {dir} seed {seed}: {w:?}");
                }
            }
        }
    }

    #[test]
    fn motion_changes_first_and_last_frame() {
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let s = gen_synth_sample(&mut rng, 16);
            assert_ne!(s.video.frame(0), s.video.frame(SYNTH_FRAMES - 1));
        }
    }

    #[test]
    fn caption_and_questions_follow_attributes() {
        let mut rng = Rng::new(4);
        for _ in 0..32 {
            let s = gen_synth_sample(&mut rng, 16);
            assert_eq!(s.caption, caption_for(s.color, s.direction));
            assert_eq!(s.question(QuestionKind::Spatial).answer_text(), COLORS[s.color]);
            assert_eq!(
                s.question(QuestionKind::Temporal).answer_text(),
                DIRECTIONS[s.direction]
            );
            let words: Vec<_> = s.caption.split(' ').collect();
            assert_eq!(COLORS.iter().position(|c| *c == words[1]), Some(s.color));
            assert_eq!(DIRECTIONS.iter().position(|d| *d == words[4]), Some(s.direction));
        }
    }

    #[test]
    fn color_is_visible_in_every_frame() {
        let s = render_sample(&mut Rng::new(0), 16, 1, 2);
        for t in 0..SYNTH_FRAMES {
            let f = s.video.frame(t);
            let green: f64 = f.data()[256..512].iter().sum();
            let other: f64 = f.data()[..256].iter().chain(&f.data()[512..]).sum();
            assert!((green - 16.0).abs() < 1e-9, "frame {t}: {green}");
            assert_eq!(other, 0.0);
        }
    }

    #[test]
    fn video_rejects_out_of_range_pixels() {
        let t = Tensor::full(&[1, 3, 2, 2], 1.5);
        assert!(Video::new(t).is_err());
        assert!(Video::new(Tensor::zeros(&[1, 1, 2, 2])).is_err());
    }
}
