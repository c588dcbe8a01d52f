use alloc::vec;

use super::{couple, FiniteMdp, Policy};
use crate::error::{Error, Result};

/// Default cap on the number of lifted states.
pub const DEFAULT_LIFT_CAP: usize = 1_000_000;

/// Index of the lifted state `(x, y)`.
#[inline]
pub fn pair_index(n_states: usize, x: usize, y: usize) -> usize {
    x * n_states + y
}

/// Single-action MDP on state pairs whose evaluation is the MICo distance.
///
/// `P((u, v) → (x, y)) = P^π_u(x) P^π_v(y)` and the reward of `(x, y)` is
/// `|r^π_x - r^π_y|`; the discount is unchanged. The transition tensor is
/// dense, so memory grows as `n_states⁴`.
pub fn lift_mdp(mdp: &FiniteMdp, policy: &Policy) -> Result<FiniteMdp> {
    lift_mdp_with_cap(mdp, policy, DEFAULT_LIFT_CAP)
}

pub fn lift_mdp_with_cap(mdp: &FiniteMdp, policy: &Policy, cap: usize) -> Result<FiniteMdp> {
    let n = mdp.n_states();
    let required = n.saturating_mul(n);
    if required > cap {
        return Err(Error::LiftTooLarge { required, cap });
    }
    let dynamics = couple(mdp, policy)?;
    let r = dynamics.rewards();
    let m = n * n;
    let mut transitions = vec![0.0; m * m];
    let mut rewards = vec![0.0; m];
    for u in 0..n {
        for v in 0..n {
            let from = pair_index(n, u, v);
            rewards[from] = libm::fabs(r[u] - r[v]);
            let row = &mut transitions[from * m..(from + 1) * m];
            for (x, &pu) in dynamics.next_states(u).iter().enumerate() {
                if pu == 0.0 {
                    continue;
                }
                for (y, &pv) in dynamics.next_states(v).iter().enumerate() {
                    row[pair_index(n, x, y)] = pu * pv;
                }
            }
        }
    }
    FiniteMdp::new(m, 1, transitions, rewards, mdp.gamma())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_garnet, policy_evaluation};

    #[test]
    fn lifted_shape_and_diagonal_rewards() {
        let mdp = build_garnet(4, 2, 0).unwrap();
        let pi = Policy::sample_random(&mdp, 0);
        let lifted = lift_mdp(&mdp, &pi).unwrap();
        assert_eq!(lifted.n_states(), 16);
        assert!(lifted.max_row_defect() < 1e-12);
        for x in 0..4 {
            assert_eq!(lifted.reward(pair_index(4, x, x), 0), 0.0);
        }
    }

    #[test]
    fn two_state_lift_values() {
        let mdp = FiniteMdp::from_nested(
            &[vec![vec![0.5, 0.5]], vec![vec![0.0, 1.0]]],
            &[vec![1.0], vec![0.0]],
            0.9,
        )
        .unwrap();
        let lifted = lift_mdp(&mdp, &Policy::uniform(2, 1)).unwrap();
        let v = policy_evaluation(
            &crate::mdp::couple(&lifted, &Policy::uniform(4, 1)).unwrap(),
            0.9,
            1e-12,
        )
        .unwrap();
        assert!((v[pair_index(2, 0, 1)] - 1.8182).abs() < 1e-3);
        assert!((v[pair_index(2, 0, 0)] - 1.0556).abs() < 1e-3);
        assert_eq!(v[pair_index(2, 1, 1)], 0.0);
    }

    #[test]
    fn cap_is_enforced() {
        let mdp = build_garnet(5, 1, 0).unwrap();
        let err = lift_mdp_with_cap(&mdp, &Policy::uniform(5, 1), 24).unwrap_err();
        assert_eq!(err, Error::LiftTooLarge { required: 25, cap: 24 });
    }
}
