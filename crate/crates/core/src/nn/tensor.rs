use ndarray::{Array1, Array2};

/// A named, shaped, row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn from1(name: String, a: &Array1<f64>) -> Self {
        Self { name, shape: vec![a.len()], data: a.to_vec() }
    }

    pub fn from2(name: String, a: &Array2<f64>) -> Self {
        Self { name, shape: a.shape().to_vec(), data: a.iter().copied().collect() }
    }
}

/// FNV-1a over names, shapes and the bit patterns of all values.
pub fn checksum(tensors: &[NamedTensor]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    for t in tensors {
        feed(t.name.as_bytes());
        for &d in &t.shape {
            feed(&(d as u64).to_le_bytes());
        }
        for &x in &t.data {
            feed(&x.to_bits().to_le_bytes());
        }
    }
    h
}
