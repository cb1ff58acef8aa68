use crate::error::{Error, Result};

/// Rows of `dim` reals, each tagged with the patch index it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    indices: Vec<usize>,
    dim: usize,
    data: Vec<f32>,
}

impl TokenSequence {
    pub fn new(indices: Vec<usize>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != indices.len() * dim {
            return Err(Error::DimensionMismatch(format!("{} values for {} tokens of width {dim}", data.len(), indices.len())));
        }
        let mut seen = indices.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::DimensionMismatch("duplicate patch index in token sequence".into()));
        }
        Ok(Self { indices, dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Self { indices: Vec::new(), dim, data: Vec::new() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn len(&self) -> usize {
        self.indices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub(crate) fn with_data(&self, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self { indices: self.indices.clone(), dim: self.dim, data }
    }

    /// Row whose patch index is `index`, if present.
    pub fn token_for(&self, index: usize) -> Option<&[f32]> {
        self.indices.iter().position(|&i| i == index).map(|r| self.row(r))
    }

    /// True when the sequence holds indices `0..n` in order.
    pub fn is_full(&self, n: usize) -> bool {
        self.indices.len() == n && self.indices.iter().enumerate().all(|(i, &v)| i == v)
    }

    /// Returns a copy of this full-length sequence with `sparse` rows written
    /// over their patch positions.
    pub fn splice(&self, sparse: &TokenSequence) -> Result<TokenSequence> {
        if sparse.dim != self.dim {
            return Err(Error::DimensionMismatch(format!("token width {} vs {}", sparse.dim, self.dim)));
        }
        let n = self.len();
        if !self.is_full(n) {
            return Err(Error::DimensionMismatch("splice target must be a full, ordered sequence".into()));
        }
        let mut out = self.clone();
        for (r, &index) in sparse.indices.iter().enumerate() {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, count: n });
            }
            out.data[index * self.dim..(index + 1) * self.dim].copy_from_slice(sparse.row(r));
        }
        Ok(out)
    }
}

/// Cached full-frame tokens: before positional embedding (`pre_encoder`)
/// and after the encoder (`post_encoder`). Empty until the first keyframe.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryTokenPools {
    pools: Option<(TokenSequence, TokenSequence)>,
}

impl MemoryTokenPools {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_initialized(&self) -> bool {
        self.pools.is_some()
    }

    pub fn pre_encoder(&self) -> Option<&TokenSequence> {
        self.pools.as_ref().map(|p| &p.0)
    }

    pub fn post_encoder(&self) -> Option<&TokenSequence> {
        self.pools.as_ref().map(|p| &p.1)
    }

    pub(crate) fn replace(&mut self, pre_encoder: TokenSequence, post_encoder: TokenSequence) {
        self.pools = Some((pre_encoder, post_encoder));
    }

    pub fn reset(&mut self) {
        self.pools = None;
    }
}
