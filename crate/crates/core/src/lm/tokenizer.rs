/// Byte values `0..=255` map to themselves; four specials follow.
pub const BOS: u32 = 256;
pub const EOS: u32 = 257;
pub const PAD: u32 = 258;
/// Marks the start of the visual segment.
pub const VID: u32 = 259;
pub const VOCAB: usize = 260;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
}

impl TokenSeq {
    pub fn new(ids: Vec<u32>) -> Self {
        Self { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Tokens before the first EOS.
    pub fn until_eos(&self) -> &[u32] {
        let end = self.ids.iter().position(|&t| t == EOS).unwrap_or(self.ids.len());
        &self.ids[..end]
    }
}

pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq::new(text.bytes().map(u32::from).collect())
}

/// Drops special tokens; invalid UTF-8 from free generation is replaced
/// lossily.
pub fn detokenize(seq: &TokenSeq) -> String {
    let bytes: Vec<u8> = seq
        .ids
        .iter()
        .filter(|&&t| t < 256)
        .map(|&t| t as u8)
        .collect();
    String::from_utf8_lossy(&bytes).into_owned()
}
