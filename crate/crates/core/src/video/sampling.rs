/// Indices of `n` frames spread uniformly over `total_frames`.
///
/// Frame `i` is taken at `floor((i + 0.5) * total_frames / n)`, the center
/// of its stretch. When `n > total_frames` indices repeat.
pub fn uniform_sample_indices(total_frames: usize, n: usize) -> Vec<usize> {
    assert!(total_frames >= 1 && n >= 1, "need total_frames >= 1 and n >= 1");
    (0..n).map(|i| (2 * i + 1) * total_frames / (2 * n)).collect()
}
