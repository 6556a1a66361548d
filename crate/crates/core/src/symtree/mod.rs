//! Symbolic policies: a two-sorted expression language over the observation
//! history, policy trees built from it, FLOP accounting and a textual form.

mod expr;
mod gen;
mod text;
mod tree;

pub use expr::{
    slope, BinaryOp, CmpOp, Expr, LogicOp, Sort, UnaryOp, DIV_EPSILON, EQ_TOLERANCE,
    EXP_ARG_LIMIT, TRIG_LIMIT,
};
pub use gen::Grammar;
pub use text::{expr_to_string, parse_expr, series_name};
pub use tree::{clamp_action, AgentState, Decision, Node, PolicyTree, TreeAgent};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{ObsHistory, Observation, Statistic};

    fn series_features(stat: Statistic, values: &[f64]) -> Vec<f64> {
        let mut x = ObsHistory::new(values.len()).features().to_vec();
        for (i, v) in values.iter().enumerate() {
            x[3 * i + stat.index()] = *v;
        }
        x
    }

    #[test]
    fn slope_examples() {
        let flat = series_features(Statistic::LatencyRatio, &[2.0, 2.0, 2.0]);
        assert_eq!(slope(&flat, Statistic::LatencyRatio), 0.0);
        let ramp = series_features(Statistic::LatencyInflation, &[0.0, 1.0, 2.0, 3.0]);
        assert!((slope(&ramp, Statistic::LatencyInflation) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn get_reads_latest_entry() {
        let mut h = ObsHistory::new(10);
        h.push(Observation {
            latency_inflation: 0.1,
            latency_ratio: 1.7,
            send_ratio: 1.2,
        });
        let e = Expr::Get(Statistic::LatencyRatio, 9);
        assert_eq!(e.eval_num(h.features(), 0), 1.7);
    }

    #[test]
    fn protected_operators() {
        assert_eq!(BinaryOp::Div.apply(3.0, 0.0), 1.0);
        assert_eq!(UnaryOp::Log.apply(-2.0), 0.0);
        assert_eq!(UnaryOp::Log.apply(0.0), 0.0);
        assert_eq!(UnaryOp::Sqrt.apply(-4.0), 2.0);
        assert!(UnaryOp::Tan.apply(std::f64::consts::FRAC_PI_2).abs() <= TRIG_LIMIT);
        assert_eq!(UnaryOp::Cot.apply(0.0), TRIG_LIMIT);
        assert!(UnaryOp::Exp.apply(1e9).is_finite());
        assert!(CmpOp::Eq.apply(0.1 + 0.2, 0.3));
    }

    #[test]
    fn leaf_only_tree() {
        let t = PolicyTree::constant(0.3);
        let mut s = AgentState::new();
        assert_eq!(t.eval(ObsHistory::new(10).features(), &mut s), 0.3);
    }

    fn sign_tree() -> PolicyTree {
        PolicyTree::parse("(if (is_lt (get obs 9 0) 0.0) (act 0.5) (act -0.5))").unwrap()
    }

    #[test]
    fn condition_routes_on_inflation() {
        let t = sign_tree();
        assert_eq!(t.leaf_count(), 2);
        let mut h = ObsHistory::new(10);
        h.push(Observation {
            latency_inflation: -0.1,
            latency_ratio: 1.0,
            send_ratio: 1.0,
        });
        let mut s = AgentState::new();
        assert_eq!(t.eval_obs(&h, &mut s), 0.5);
        h.push(Observation {
            latency_inflation: 0.1,
            latency_ratio: 1.0,
            send_ratio: 1.0,
        });
        assert_eq!(t.eval_obs(&h, &mut s), -0.5);
    }

    #[test]
    fn stable_link_grows_rate() {
        // Grow while the path looks idle, back off and remember overload otherwise.
        let t = PolicyTree::parse(
            "(if (and (is_lt (get obs_ratio 9) 1.05) (is_le (get obs_send 9) 1.01))
               (act 0.8 set 0)
               (if (is_lt (get obs_inflation 9) 0.02)
                 (act 0.1)
                 (act -1.0 set 1)))",
        )
        .unwrap();
        let mut s = AgentState::new();
        assert!(t.eval_obs(&ObsHistory::new(10), &mut s) > 0.0);
        let mut h = ObsHistory::new(10);
        h.push(Observation {
            latency_inflation: 0.3,
            latency_ratio: 2.0,
            send_ratio: 1.0,
        });
        assert_eq!(t.eval_obs(&h, &mut s), -1.0);
        assert_eq!(s.internal, 1);
    }

    #[test]
    fn action_is_clamped_and_nan_safe() {
        let t = PolicyTree::constant(3.0);
        let mut s = AgentState::new();
        assert_eq!(t.eval(ObsHistory::new(10).features(), &mut s), 1.0);
        assert_eq!(clamp_action(f64::NAN), 0.0);
    }

    #[test]
    fn flop_examples() {
        assert_eq!(PolicyTree::constant(0.0).flops(10), 0);
        let e = parse_expr("(+ (get obs_inflation 9) (get obs_ratio 9))").unwrap();
        assert_eq!(e.flops(10), 1);
        assert_eq!(Expr::Slope(Statistic::SendRatio).flops(10), 22);
        // condition (1) + larger leaf (0)
        assert_eq!(sign_tree().flops(10), 1);
        let t = PolicyTree::parse(
            "(if (is_lt (state) 0.5) (act (/ (get obs_send 9) 2.0)) (act 0.0))",
        )
        .unwrap();
        assert_eq!(t.flops(10), 5);
    }

    #[test]
    fn grammar_examples_parse() {
        let t = PolicyTree::parse("(act 0.0)").unwrap();
        assert_eq!(t, PolicyTree::constant(0.0));
        let a = sign_tree();
        let b = PolicyTree::parse(
            "(if (is_lt (get obs_inflation 9) 0.0)\n  (act 0.5)\n  (act -0.5))\n",
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_text(), "(if (is_lt (get obs_inflation 9) 0.0)\n  (act 0.5)\n  (act -0.5))\n");
    }

    #[test]
    fn parse_errors_carry_position() {
        match PolicyTree::parse("(if (is_lt (get obs_ratio 9) 1.0)\n  (act 0.5)\n  (bogus))") {
            Err(crate::Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 4)),
            other => panic!("unexpected {other:?}"),
        }
        match PolicyTree::parse("(if (+ 1.0 2.0) (act 0.5) (act 0.1))") {
            Err(crate::Error::Parse { line, column, expected, .. }) => {
                assert_eq!((line, column), (1, 5));
                assert_eq!(expected, "boolean expression");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(PolicyTree::parse("(act 0.5").is_err());
        assert!(PolicyTree::parse("(act 0.5) extra").is_err());
        assert!(PolicyTree::parse("(act nan)").is_err());
        assert!(PolicyTree::parse("(act 0.5 set 2)").is_err());
    }

    #[test]
    fn subtree_addressing_is_preorder() {
        let e = parse_expr("(+ (sin (state)) (* 2.0 (get obs_send 3)))").unwrap();
        let nodes = e.preorder();
        assert_eq!(nodes.len(), e.node_count());
        for (i, n) in nodes.iter().enumerate() {
            assert_eq!(e.subtree(i), Some(*n));
        }
        let mut f = e.clone();
        *f.subtree_mut(3).unwrap() = Expr::Const(1.0);
        assert_eq!(expr_to_string(&f), "(+ (sin (state)) 1.0)");
        assert_eq!(e.node_depths(), vec![0, 1, 2, 1, 2, 2]);
    }

    #[test]
    fn type_checker_rejects_bad_indices() {
        assert!(Expr::Get(Statistic::LatencyRatio, 10).check(10).is_err());
        let bad = Expr::binary(BinaryOp::Add, Expr::Const(1.0), Expr::negate(Expr::Const(1.0)));
        assert!(bad.check(10).is_err());
    }
}
