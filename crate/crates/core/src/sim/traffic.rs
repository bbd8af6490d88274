//! Synthetic destination patterns.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum TrafficPattern {
    Uniform,
    /// Six torus neighbors on the most-cubic grid holding all endnodes.
    Stencil3d,
    /// `floor(fraction * N)` sources saturate `floor(log2(sources))` victims.
    Hotspot {
        fraction: f64,
    },
    /// Only the listed sources inject, each to its fixed destination.
    Pairs {
        pairs: Vec<(u32, u32)>,
    },
}

impl TrafficPattern {
    pub fn hotspot() -> Self {
        TrafficPattern::Hotspot { fraction: 0.06 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrafficPattern::Uniform => "uniform",
            TrafficPattern::Stencil3d => "stencil3d",
            TrafficPattern::Hotspot { .. } => "hotspot",
            TrafficPattern::Pairs { .. } => "pairs",
        }
    }
}

impl std::str::FromStr for TrafficPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(TrafficPattern::Uniform),
            "stencil3d" | "stencil" => Ok(TrafficPattern::Stencil3d),
            "hotspot" => Ok(TrafficPattern::hotspot()),
            other => Err(format!(
                "unknown traffic pattern `{other}` (expected uniform, stencil3d or hotspot)"
            )),
        }
    }
}

/// Dimensions `x <= y <= z` with `x*y*z == n`, smallest `z` first, then smallest spread.
pub fn cubic_dims(n: usize) -> [usize; 3] {
    let mut best = [1, 1, n];
    for x in 1..=n {
        if x * x * x > n {
            break;
        }
        if !n.is_multiple_of(x) {
            continue;
        }
        let rest = n / x;
        for y in x..=rest {
            if y * y > rest {
                break;
            }
            if !rest.is_multiple_of(y) {
                continue;
            }
            let z = rest / y;
            if (z, z - x) < (best[2], best[2] - best[0]) {
                best = [x, y, z];
            }
        }
    }
    best
}

/// Distinct torus neighbors of every endnode, row-major over `cubic_dims`.
pub fn stencil_neighbors(n: usize) -> Vec<Vec<u32>> {
    let [dx, dy, dz] = cubic_dims(n);
    let id = |x: usize, y: usize, z: usize| ((x * dy + y) * dz + z) as u32;
    (0..n)
        .map(|e| {
            let (x, y, z) = (e / (dy * dz), (e / dz) % dy, e % dz);
            let mut out = vec![
                id((x + 1) % dx, y, z),
                id((x + dx - 1) % dx, y, z),
                id(x, (y + 1) % dy, z),
                id(x, (y + dy - 1) % dy, z),
                id(x, y, (z + 1) % dz),
                id(x, y, (z + dz - 1) % dz),
            ];
            out.sort_unstable();
            out.dedup();
            out.retain(|&v| v as usize != e);
            out
        })
        .collect()
}

/// Pattern resolved against a concrete endnode count and seed.
#[derive(Debug, Clone)]
pub(crate) struct Traffic {
    n: usize,
    kind: Resolved,
    /// Per source: injects at full rate regardless of the offered load.
    pub saturating: Vec<bool>,
    /// Per source: generates traffic at all.
    pub active: Vec<bool>,
    /// Endnodes whose received traffic is reported.
    pub measured: Vec<u32>,
}

#[derive(Debug, Clone)]
enum Resolved {
    Uniform,
    Stencil(Vec<Vec<u32>>),
    Hotspot { victims: Vec<u32> },
    Pairs(Vec<Option<u32>>),
}

impl Traffic {
    pub fn resolve(
        pattern: &TrafficPattern,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, SimError> {
        let everyone: Vec<u32> = (0..n as u32).collect();
        let mut traffic = Traffic {
            n,
            kind: Resolved::Uniform,
            saturating: vec![false; n],
            active: vec![n > 1; n],
            measured: everyone.clone(),
        };
        match pattern {
            TrafficPattern::Uniform => {}
            TrafficPattern::Stencil3d => {
                let neighbors = stencil_neighbors(n);
                for (e, list) in neighbors.iter().enumerate() {
                    traffic.active[e] = !list.is_empty();
                }
                traffic.kind = Resolved::Stencil(neighbors);
            }
            TrafficPattern::Hotspot { fraction } => {
                if !(0.0..=1.0).contains(fraction) {
                    return Err(SimError::InvalidConfig(format!(
                        "hotspot fraction {fraction} outside [0, 1]"
                    )));
                }
                let sources = (fraction * n as f64).floor() as usize;
                let victims = if sources == 0 {
                    0
                } else {
                    sources.ilog2() as usize
                };
                if victims == 0 {
                    return Err(SimError::InvalidConfig(format!(
                        "hotspot on {n} endnodes has {sources} sources and no victims"
                    )));
                }
                let picked = sample(rng, n, victims + sources).into_vec();
                let mut victim_ids: Vec<u32> =
                    picked[..victims].iter().map(|&v| v as u32).collect();
                victim_ids.sort_unstable();
                for &s in &picked[victims..] {
                    traffic.saturating[s] = true;
                }
                traffic.measured = everyone
                    .into_iter()
                    .filter(|e| victim_ids.binary_search(e).is_err())
                    .collect();
                traffic.kind = Resolved::Hotspot {
                    victims: victim_ids,
                };
            }
            TrafficPattern::Pairs { pairs } => {
                let mut dst = vec![None; n];
                for &(s, d) in pairs {
                    if s as usize >= n || d as usize >= n || s == d {
                        return Err(SimError::InvalidConfig(format!(
                            "bad pair {s}->{d} for {n} endnodes"
                        )));
                    }
                    dst[s as usize] = Some(d);
                }
                traffic.active = dst.iter().map(Option::is_some).collect();
                let mut measured: Vec<u32> = pairs.iter().map(|&(_, d)| d).collect();
                measured.sort_unstable();
                measured.dedup();
                traffic.measured = measured;
                traffic.kind = Resolved::Pairs(dst);
            }
        }
        Ok(traffic)
    }

    pub fn destination(&self, src: usize, rng: &mut ChaCha8Rng) -> u32 {
        match &self.kind {
            Resolved::Hotspot { victims } if self.saturating[src] => {
                victims[rng.gen_range(0..victims.len())]
            }
            Resolved::Uniform | Resolved::Hotspot { .. } => {
                let d = rng.gen_range(0..self.n - 1);
                (if d >= src { d + 1 } else { d }) as u32
            }
            Resolved::Stencil(neighbors) => {
                let list = &neighbors[src];
                list[rng.gen_range(0..list.len())]
            }
            Resolved::Pairs(dst) => dst[src].expect("only active sources generate"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn most_cubic_dims() {
        assert_eq!(cubic_dims(72), [3, 4, 6]);
        assert_eq!(cubic_dims(64), [4, 4, 4]);
        assert_eq!(cubic_dims(342), [3, 6, 19]);
        assert_eq!(cubic_dims(7), [1, 1, 7]);
        assert_eq!(cubic_dims(1), [1, 1, 1]);
    }

    #[test]
    fn stencil_neighbors_are_symmetric() {
        for n in [2, 6, 8, 27, 72] {
            let nb = stencil_neighbors(n);
            for (e, list) in nb.iter().enumerate() {
                assert!(list.len() <= 6);
                for &v in list {
                    assert!(nb[v as usize].contains(&(e as u32)), "n={n} {e}->{v}");
                }
            }
        }
        assert_eq!(stencil_neighbors(64)[0].len(), 6);
    }

    #[test]
    fn hotspot_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = Traffic::resolve(&TrafficPattern::hotspot(), 72, &mut rng).unwrap();
        assert_eq!(t.saturating.iter().filter(|&&s| s).count(), 4);
        assert_eq!(t.measured.len(), 70);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(Traffic::resolve(&TrafficPattern::hotspot(), 20, &mut rng).is_err());
    }

    #[test]
    fn uniform_never_picks_self() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Traffic::resolve(&TrafficPattern::Uniform, 3, &mut rng).unwrap();
        let mut seen = [0; 3];
        for _ in 0..300 {
            let d = t.destination(1, &mut rng);
            assert_ne!(d, 1);
            seen[d as usize] += 1;
        }
        assert!(seen[0] > 100 && seen[2] > 100);
    }
}
