//! Scenario timelines, union clearance and the text format.

use latentroute::oracle::arm_clearance_oracle;
use latentroute::scenario::{builtin_names, builtin_text, Scenario};
use latentroute::{JointVector, RobotModel};
use proptest::prelude::*;

fn one_track(kind: &str, a: &str, b: &str, p: [f64; 3], q: [f64; 3], t1: u64) -> Scenario {
    let text = format!(
        "latentroute-scenario 1\n[scenario]\nid = p\ndescription = prop\ncategory = crossing\n\
         start = 0 0 0 -1.5 0 1.5 0\ngoal = 0.5 0 0 -1.5 0 1.5 0\n\
         [obstacle o]\nkeyframes\n0 {kind} {a} | {} {} {}\n{t1} {kind} {b} | {} {} {}\n",
        p[0], p[1], p[2], q[0], q[1], q[2]
    );
    Scenario::parse(&text).unwrap()
}

fn coord() -> impl Strategy<Value = f64> {
    -1.0..1.0f64
}

#[test]
fn builtins_round_trip_and_validate() {
    let robot = RobotModel::panda();
    for name in builtin_names() {
        let s = Scenario::parse(builtin_text(name).unwrap()).unwrap();
        assert_eq!(s.id, name);
        s.validate(&robot).unwrap();
        let again = Scenario::parse(&s.to_text()).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.content_hash(), s.content_hash());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sphere_track_is_linear_and_continuous(
        p in [coord(), coord(), coord()],
        q in [coord(), coord(), coord()],
        r0 in 0.01..0.2f64,
        r1 in 0.01..0.2f64,
        t1 in 2u64..200,
    ) {
        let s = one_track("sphere", &r0.to_string(), &r1.to_string(), p, q, t1);
        let step = (0..3).map(|k| (q[k] - p[k]).powi(2)).sum::<f64>().sqrt() / t1 as f64;
        let mut last: Option<[f64; 3]> = None;
        for tick in 0..t1 + 5 {
            let o = s.obstacle_at(tick).unwrap().unwrap();
            let c = o.members[0].shape.pose.position;
            let u = (tick.min(t1)) as f64 / t1 as f64;
            for k in 0..3 {
                prop_assert!((c[k] - (p[k] + (q[k] - p[k]) * u)).abs() < 1e-12);
            }
            let r = o.members[0].shape.kind.dims()[0];
            prop_assert!((r - (r0 + (r1 - r0) * u)).abs() < 1e-12);
            if let Some(l) = last {
                let moved = (0..3).map(|k| (c[k] - l[k]).powi(2)).sum::<f64>().sqrt();
                prop_assert!(moved <= step + 1e-12);
            }
            last = Some([c[0], c[1], c[2]]);
        }
    }

    #[test]
    fn union_clearance_is_the_member_minimum(
        centres in prop::collection::vec((coord(), coord(), 0.0..1.2f64), 1..4),
        joints in prop::array::uniform7(-1.0..1.0f64),
    ) {
        let robot = RobotModel::panda();
        let mut text = String::from(
            "latentroute-scenario 1\n[scenario]\nid = u\ndescription = union\ncategory = multi\n\
             start = 0 0 0 -1.5 0 1.5 0\ngoal = 0.5 0 0 -1.5 0 1.5 0\n",
        );
        for (i, &(x, y, z)) in centres.iter().enumerate() {
            let shape = if i % 2 == 0 { "box 0.05 0.1 0.07" } else { "sphere 0.08" };
            text.push_str(&format!("[obstacle m{i}]\nkeyframes\n0 {shape} | {x} {y} {z}\n"));
        }
        let s = Scenario::parse(&text).unwrap();
        let q = robot.clamp(&JointVector(joints)).0;
        let o = s.obstacle_at(0).unwrap().unwrap();
        let u = o.clearance(&robot, &q).unwrap().unwrap();
        let per_member: Vec<f64> = o
            .shapes()
            .iter()
            .map(|m| arm_clearance_oracle(&robot, &q, std::slice::from_ref(m)).unwrap().1)
            .collect();
        let min = per_member.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!((u.report.min_distance - min).abs() < 1e-6);
        prop_assert!((per_member[u.member] - min).abs() < 1e-6);
    }

    #[test]
    fn canonical_text_is_a_fixed_point(
        p in [coord(), coord(), coord()],
        q in [coord(), coord(), coord()],
        a in 0.01..0.3f64,
        t1 in 1u64..50,
    ) {
        let s = one_track("box", &format!("{a} {a} {a}"), "0.1 0.2 0.3", p, q, t1);
        let text = s.to_text();
        let back = Scenario::parse(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.to_text(), text);
    }
}
