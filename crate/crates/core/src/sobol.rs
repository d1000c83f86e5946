//! Unscrambled Sobol points with Joe–Kuo direction numbers, generated in
//! Gray-code order (the ordering of the reference implementation).

const BITS: usize = 32;

// (s, a, m_1..m_s) from new-joe-kuo-6.21201 for dimensions 2..=8; dimension 1
// is the van der Corput sequence.
const DIRECTIONS: &[(u32, &[u32])] = &[
    (0, &[1]),
    (1, &[1, 3]),
    (1, &[1, 3, 1]),
    (2, &[1, 1, 1]),
    (1, &[1, 1, 3, 3]),
    (4, &[1, 3, 5, 13]),
    (2, &[1, 1, 5, 5, 17]),
];

pub const MAX_DIMS: usize = DIRECTIONS.len() + 1;

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (31 - k);
        }
        return v;
    }
    let (a, m) = DIRECTIONS[dim - 1];
    let s = m.len();
    for k in 0..s {
        v[k] = m[k] << (31 - k);
    }
    for k in s..BITS {
        v[k] = v[k - s] ^ (v[k - s] >> s);
        for j in 1..s {
            if (a >> (s - 1 - j)) & 1 == 1 {
                v[k] ^= v[k - j];
            }
        }
    }
    v
}

/// Iterator over Sobol points in `[0, 1)^dims`, starting at index 0 (the origin).
#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl Sobol {
    pub fn new(dims: usize) -> Option<Self> {
        (1..=MAX_DIMS).contains(&dims).then(|| Self {
            directions: (0..dims).map(direction_numbers).collect(),
            state: vec![0; dims],
            index: 0,
        })
    }
}

impl Iterator for Sobol {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.index >= 1 << BITS {
            return None;
        }
        if self.index > 0 {
            // flip the direction number for the lowest zero bit of index - 1
            let c = (self.index - 1).trailing_ones() as usize;
            for (x, v) in self.state.iter_mut().zip(&self.directions) {
                *x ^= v[c];
            }
        }
        self.index += 1;
        Some(self.state.iter().map(|&x| x as f64 / 4_294_967_296.0).collect())
    }
}

/// The first `count` Sobol points after the origin.
pub fn sobol_points(dims: usize, count: usize) -> Option<Vec<Vec<f64>>> {
    Some(Sobol::new(dims)?.skip(1).take(count).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    // Brute-force definition: point i is the XOR of the direction numbers
    // selected by the bits of gray(i).
    fn by_definition(dims: usize, i: u64) -> Vec<f64> {
        let gray = i ^ (i >> 1);
        (0..dims)
            .map(|d| {
                let v = direction_numbers(d);
                let x = (0..BITS)
                    .filter(|&k| (gray >> k) & 1 == 1)
                    .fold(0u32, |acc, k| acc ^ v[k]);
                x as f64 / 4_294_967_296.0
            })
            .collect()
    }

    #[test]
    fn reference_points_2d() {
        // unscrambled Joe-Kuo points as produced by scipy.stats.qmc.Sobol
        let expected = [
            [0.5, 0.5],
            [0.75, 0.25],
            [0.25, 0.75],
            [0.375, 0.375],
            [0.875, 0.875],
            [0.625, 0.125],
            [0.125, 0.625],
            [0.1875, 0.3125],
            [0.6875, 0.8125],
            [0.9375, 0.0625],
        ];
        let got = sobol_points(2, 10).unwrap();
        for (g, e) in got.iter().zip(expected) {
            assert_eq!(g.as_slice(), e.as_slice());
        }
    }

    #[test]
    fn reference_points_4d() {
        let got = sobol_points(4, 4).unwrap();
        assert_eq!(got[3], vec![0.375, 0.375, 0.625, 0.875]);
        assert_eq!(got[1], vec![0.75, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn recurrence_matches_definition() {
        for dims in 1..=MAX_DIMS {
            for (i, p) in Sobol::new(dims).unwrap().take(300).enumerate() {
                assert_eq!(p, by_definition(dims, i as u64), "dims {dims} index {i}");
            }
        }
    }

    #[test]
    fn unsupported_dimension() {
        assert!(Sobol::new(0).is_none());
        assert!(Sobol::new(MAX_DIMS + 1).is_none());
    }
}
