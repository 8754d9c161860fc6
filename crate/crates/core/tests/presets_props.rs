use orthant_games::presets::{Mode, NetworkSpec, Rate, Topology, LU_KUMAR_ASSIGNMENTS};
use proptest::prelude::*;

/// Flow of serving queue `q` (1-based) in the four-queue line.
fn served(q: usize) -> [f64; 4] {
    let mut f = [0.0; 4];
    f[q - 1] = -1.0;
    if q < 4 {
        f[q] = 1.0;
    }
    f
}

fn rate() -> impl Strategy<Value = f64> {
    (1..=40u32).prop_map(|k| k as f64 * 0.125)
}

proptest! {
    #[test]
    fn lu_kumar_velocities_balance_flows(lambda in rate(), mu in prop::array::uniform4(rate())) {
        let spec = NetworkSpec {
            topology: Topology::LuKumar,
            mode: Mode::Fixed,
            arrival: Rate::Value(lambda),
            service: mu.iter().map(|m| Rate::Value(*m)).collect(),
            c: 1.0,
        };
        let f = spec.costs().unwrap();
        for (b, (a, s)) in f.branches().iter().zip(LU_KUMAR_ASSIGNMENTS) {
            let mut expected = [lambda, 0.0, 0.0, 0.0];
            for q in [a, s] {
                for (e, x) in expected.iter_mut().zip(served(q)) {
                    *e += mu[q - 1] * x;
                }
            }
            prop_assert_eq!(b.velocity_candidates(), &[expected.to_vec()][..]);
        }
    }

    #[test]
    fn robust_vertex_count(widths in prop::array::uniform5(prop::bool::ANY)) {
        let interval = |lo: f64, wide: bool| Rate::Interval([lo, if wide { lo + 0.25 } else { lo }]);
        let spec = NetworkSpec {
            topology: Topology::LuKumar,
            mode: Mode::Robust,
            arrival: interval(1.0, widths[0]),
            service: (0..4).map(|i| interval(1.5 + 0.125 * i as f64, widths[i + 1])).collect(),
            c: 1.0,
        };
        let f = spec.costs().unwrap();
        for (b, (a, s)) in f.branches().iter().zip(LU_KUMAR_ASSIGNMENTS) {
            let wide = [0, a, s].iter().filter(|r| widths[**r]).count();
            prop_assert_eq!(b.velocity_candidates().len(), 1 << wide);
        }
    }
}
