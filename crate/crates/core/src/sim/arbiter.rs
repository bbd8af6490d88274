//! Per-output round-robin arbitration over (input port, VL) pairs.

/// A packet at the head of an (input, VL) queue requesting one output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub input: usize,
    pub vl: usize,
    /// Downstream space for the whole packet, or a sink that needs none.
    pub has_credits: bool,
}

/// Round robin over VLs, then over inputs within the chosen VL.
///
/// Each VL keeps its own input pointer, moved only by grants on that VL, so
/// traffic on one VL cannot park the pointer in front of a competitor on another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRobinArbiter {
    inputs: usize,
    /// VL checked first on the next call.
    next_vl: usize,
    /// Per VL, the input checked first on the next grant of that VL.
    next_input: Vec<usize>,
}

impl RoundRobinArbiter {
    pub fn new(inputs: usize, vls: usize) -> Self {
        RoundRobinArbiter {
            inputs,
            next_vl: 0,
            next_input: vec![0; vls],
        }
    }

    /// First VL at or after the VL pointer with an eligible input, and within
    /// it the first eligible input at or after that VL's pointer. Both pointers
    /// move past the winner.
    pub fn pick(
        &mut self,
        mut eligible: impl FnMut(usize, usize) -> bool,
    ) -> Option<(usize, usize)> {
        let vls = self.next_input.len();
        for j in 0..vls {
            let vl = (self.next_vl + j) % vls;
            let first = self.next_input[vl];
            for k in 0..self.inputs {
                let input = (first + k) % self.inputs;
                if eligible(input, vl) {
                    self.next_vl = (vl + 1) % vls;
                    self.next_input[vl] = (input + 1) % self.inputs;
                    return Some((input, vl));
                }
            }
        }
        None
    }
}

/// Chooses among candidates; `None` only when no candidate has credits.
pub fn arbitrate_output(
    arbiter: &mut RoundRobinArbiter,
    candidates: &[Candidate],
) -> Option<Candidate> {
    arbiter
        .pick(|input, vl| {
            candidates
                .iter()
                .any(|c| c.input == input && c.vl == vl && c.has_credits)
        })
        .map(|(input, vl)| Candidate {
            input,
            vl,
            has_credits: true,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(input: usize, vl: usize, has_credits: bool) -> Candidate {
        Candidate {
            input,
            vl,
            has_credits,
        }
    }

    #[test]
    fn single_candidate_is_chosen() {
        let mut arb = RoundRobinArbiter::new(4, 2);
        assert_eq!(
            arbitrate_output(&mut arb, &[c(2, 1, true)]),
            Some(c(2, 1, true))
        );
        assert_eq!(
            arbitrate_output(&mut arb, &[c(2, 1, true)]),
            Some(c(2, 1, true))
        );
        assert_eq!(arbitrate_output(&mut arb, &[]), None);
    }

    #[test]
    fn two_candidates_alternate() {
        let mut arb = RoundRobinArbiter::new(4, 2);
        let both = [c(0, 0, true), c(3, 1, true)];
        let picks: Vec<usize> = (0..6)
            .map(|_| arbitrate_output(&mut arb, &both).unwrap().input)
            .collect();
        assert_eq!(picks, vec![0, 3, 0, 3, 0, 3]);
    }

    #[test]
    fn candidate_without_credits_is_skipped() {
        let mut arb = RoundRobinArbiter::new(4, 2);
        let cands = [c(0, 0, false), c(1, 0, true)];
        for _ in 0..5 {
            assert_eq!(arbitrate_output(&mut arb, &cands).unwrap().input, 1);
        }
        assert_eq!(arbitrate_output(&mut arb, &[c(0, 0, false)]), None);
    }

    #[test]
    fn other_vl_grants_do_not_bias_a_vl() {
        // input 1 also wins VL0 every round; VL1 must still alternate
        let mut arb = RoundRobinArbiter::new(4, 2);
        let mut vl1 = Vec::new();
        for _ in 0..6 {
            assert_eq!(arbitrate_output(&mut arb, &[c(1, 0, true)]).unwrap().input, 1);
            let pick = arbitrate_output(&mut arb, &[c(0, 1, true), c(1, 1, true)]).unwrap();
            vl1.push(pick.input);
        }
        assert_eq!(vl1, vec![0, 1, 0, 1, 0, 1]);
    }
}
