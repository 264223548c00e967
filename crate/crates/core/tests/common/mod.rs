//! Generators and checks shared by the property tests and the acceptance run.

#![allow(dead_code)]

use proptest::prelude::*;
use tamp_core::agent::{dispatch, PlacementEngine, ToolRegistry};
use tamp_core::harness::{check_goal, GoalPredicate, GoalTolerance};
use tamp_core::placer::{resolve_geometric, AxisConvention, CategoryMap, ResolveConfig, SpatialSpecifier};
use tamp_core::react_protocol::{FinalTurn, PlanTranscript, ReActStep};
use tamp_core::world::{Held, Pose6D, Scene, SceneObject, Table, Vec3};

/// The reference banana/plate plan in the line grammar.
pub const BANANA_TRANSCRIPT: &str = "\
Question: How to place the banana on the left of the plate?
Thought: I need to check if both the banana and the plate are present in the scene.
Action: get_object_list
Action Input: Check for banana and plate
Observation: ['029_plate', '011_banana']
Thought: Both the banana and the plate are present in the scene. I can proceed to pick up the banana.
Action: pick_object
Action Input: 011_banana
Observation: You have picked up 011_banana
Thought: I have successfully picked up the banana. Now I need to place it to the left of the plate.
Action: place_object
Action Input: to the left of the 029_plate
Observation: You have placed 011_banana to the left of the 029_plate
Thought: I now know the final answer.
Final Answer: The banana has been successfully placed to the left of the plate.
";

pub fn data(rel: &str) -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
}

pub fn specifier() -> impl Strategy<Value = SpatialSpecifier> {
    proptest::sample::select(SpatialSpecifier::ALL.to_vec())
}

// ---------------------------------------------------------------------------
// Transcripts
// ---------------------------------------------------------------------------

/// A single-line field value that is not mistaken for a marker.
fn field() -> impl Strategy<Value = String> {
    "[a-z0-9_][a-zA-Z0-9_ ,.'()\\[\\]-]{0,40}".prop_map(|s| s.trim().to_string())
}

pub fn transcript() -> impl Strategy<Value = PlanTranscript> {
    let step = (field(), "[a-z_]{1,16}", field(), field()).prop_map(|(thought, action, action_input, observation)| {
        ReActStep {
            thought,
            action,
            action_input,
            observation,
        }
    });
    let final_turn =
        proptest::option::of((field(), field()).prop_map(|(thought, answer)| FinalTurn { thought, answer }));
    (field(), proptest::collection::vec(step, 0..6), final_turn).prop_map(|(question, steps, final_turn)| {
        let mut t = PlanTranscript::new(question);
        t.steps = steps;
        t.final_turn = final_turn;
        t
    })
}

// ---------------------------------------------------------------------------
// Goal closure
// ---------------------------------------------------------------------------

/// One target near the table center, a held object, and clutter in the corners.
#[derive(Debug, Clone)]
pub struct ClosureCase {
    pub up: f64,
    pub target: (f64, f64, f64),
    pub held_diameter: f64,
    pub clutter: Vec<(usize, f64)>,
}

pub fn closure_case() -> impl Strategy<Value = ClosureCase> {
    (
        prop_oneof![Just(-1.0), Just(1.0)],
        (-0.1..0.1f64, -0.08..0.08f64, 0.04..0.2f64),
        0.03..0.12f64,
        proptest::collection::vec((0..4usize, 0.03..0.06f64), 0..3),
    )
        .prop_map(|(up, target, held_diameter, clutter)| ClosureCase {
            up,
            target,
            held_diameter,
            clutter,
        })
}

impl ClosureCase {
    pub fn scene(&self) -> Scene {
        let mut table = Table::new([-0.5, -0.4], [0.5, 0.4]);
        table.up = self.up;
        let (x, y, d) = self.target;
        let mut scene = Scene::new(table).with_object(SceneObject::new(
            "target",
            Pose6D::at(Vec3::new(x, y, table.resting_z(d / 2.0))),
            d,
        ));
        let corners = [(0.45, 0.35), (-0.45, 0.35), (0.45, -0.35), (-0.45, -0.35)];
        let mut used = [false; 4];
        for (i, &(corner, d)) in self.clutter.iter().enumerate() {
            if std::mem::replace(&mut used[corner], true) {
                continue;
            }
            let (cx, cy) = corners[corner];
            scene = scene.with_object(SceneObject::new(
                format!("clutter{i}"),
                Pose6D::at(Vec3::new(cx, cy, table.resting_z(d / 2.0))),
                d,
            ));
        }
        scene.with_held(Held {
            id: "held".into(),
            diameter: self.held_diameter,
        })
    }

    pub fn convention(&self) -> AxisConvention {
        AxisConvention::default().with_up(self.up)
    }
}

/// Resolves, places and goal-checks one specifier; containment is the only
/// relation allowed to bring the two bounding spheres closer than touching.
pub fn check_closure(case: &ClosureCase, spec: SpatialSpecifier) -> Result<(), String> {
    let scene = case.scene();
    let convention = case.convention();
    let targets = ["target".to_string()];
    let res = resolve_geometric(
        &scene,
        spec,
        &targets,
        case.held_diameter,
        &convention,
        &ResolveConfig::default(),
    )
    .map_err(|e| format!("{spec:?}: resolve failed: {e}"))?;
    let (placed, _) = scene
        .place_at(res.position, &res.support, "")
        .map_err(|e| format!("{spec:?}: place failed: {e}"))?;
    placed.check_invariants().map_err(|e| format!("{spec:?}: {e}"))?;
    let goal = GoalPredicate::Relation {
        specifier: spec,
        object: "held".into(),
        target: "target".into(),
    };
    let report = check_goal(
        &placed,
        &[goal],
        &convention,
        &CategoryMap::default(),
        &GoalTolerance::default(),
    )
    .map_err(|e| e.to_string())?;
    if !report.passed {
        let why: Vec<_> = report.failures().map(|r| r.detail.clone()).collect();
        return Err(format!("{spec:?}: goal failed: {}", why.join("; ")));
    }
    if spec != SpatialSpecifier::Inside {
        let t = placed.object("target").unwrap();
        let h = placed.object("held").unwrap();
        let clearance = (h.center() - t.center()).norm();
        let required = t.radius() + h.radius() - 0.005;
        if clearance < required {
            return Err(format!("{spec:?}: clearance {clearance:.4} < {required:.4}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tool-call state machine
// ---------------------------------------------------------------------------

pub const IDS: [&str; 8] = [
    "002_master_chef_can",
    "003_cracker_box",
    "004_sugar_box",
    "011_banana",
    "013_apple",
    "024_bowl",
    "025_mug",
    "029_plate",
];

const SLOTS: [(f64, f64); 8] = [
    (-0.3, -0.25),
    (-0.1, -0.25),
    (0.1, -0.25),
    (0.3, -0.25),
    (-0.3, 0.25),
    (-0.1, 0.25),
    (0.1, 0.25),
    (0.3, 0.25),
];

#[derive(Debug, Clone)]
pub enum Op {
    List,
    /// Index into [`IDS`] plus one unknown id.
    Pick(usize),
    Place(SpatialSpecifier, usize),
    Release,
    /// Direct pick then free-space release of one object.
    RoundTrip(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        1 => Just(Op::List),
        3 => (0..=IDS.len()).prop_map(Op::Pick),
        3 => (specifier(), 0..=IDS.len()).prop_map(|(s, t)| Op::Place(s, t)),
        1 => Just(Op::Release),
        2 => (0..IDS.len()).prop_map(Op::RoundTrip),
    ]
}

#[derive(Debug, Clone)]
pub struct Sequence {
    /// Which of the [`IDS`] are on the table, with diameters.
    pub objects: Vec<(usize, f64)>,
    pub ops: Vec<Op>,
}

pub fn sequence() -> impl Strategy<Value = Sequence> {
    (
        proptest::sample::subsequence((0..IDS.len()).collect::<Vec<_>>(), 2..=IDS.len()),
        proptest::collection::vec(0.04..0.12f64, IDS.len()),
        proptest::collection::vec(op(), 1..24),
    )
        .prop_map(|(chosen, diameters, ops)| Sequence {
            objects: chosen.into_iter().map(|i| (i, diameters[i])).collect(),
            ops,
        })
}

fn id(i: usize) -> &'static str {
    IDS.get(i).copied().unwrap_or("999_unknown")
}

impl Sequence {
    pub fn scene(&self) -> Scene {
        let table = Table::new([-0.5, -0.4], [0.5, 0.4]);
        self.objects.iter().fold(Scene::new(table), |scene, &(i, d)| {
            let (x, y) = SLOTS[i];
            scene.with_object(SceneObject::new(
                IDS[i],
                Pose6D::at(Vec3::new(x, y, table.resting_z(d / 2.0))),
                d,
            ))
        })
    }
}

fn same_pose_bits(a: &SceneObject, b: &SceneObject) -> bool {
    let bits = |o: &SceneObject| {
        let t = o.pose.translation();
        let q = o.pose.orientation_xyzw();
        [t.x, t.y, t.z, q[0], q[1], q[2], q[3], o.diameter].map(f64::to_bits)
    };
    a.id == b.id && bits(a) == bits(b)
}

/// Runs one sequence through the tool dispatcher, checking invariants after
/// every call, that failed calls change nothing, that objects are conserved,
/// and that pick→release leaves every other pose bit-identical. Returns how
/// many picks, placements and round trips succeeded.
pub fn check_sequence(seq: &Sequence) -> Result<[usize; 3], String> {
    let mut done = [0; 3];
    let registry = ToolRegistry::default();
    let engine = PlacementEngine::default();
    let mut scene = seq.scene();
    scene.check_invariants().map_err(|e| format!("initial scene: {e}"))?;
    let total = scene.objects().len();
    for (n, op) in seq.ops.iter().enumerate() {
        let before = scene.clone();
        let (action, input) = match op {
            Op::List => ("get_object_list", String::new()),
            Op::Pick(i) => ("pick_object", id(*i).to_string()),
            Op::Place(s, t) => ("place_object", format!("{} the {}", s.phrase(), id(*t))),
            Op::Release => ("release_object", String::new()),
            Op::RoundTrip(i) => {
                if let Ok((picked, _)) = scene.pick(id(*i)) {
                    if let Ok((released, _)) = picked.release_free_space() {
                        let others: Vec<_> = before.objects().iter().filter(|o| o.id != id(*i)).collect();
                        let after: Vec<_> = released.objects().iter().filter(|o| o.id != id(*i)).collect();
                        if others.len() != after.len() || others.iter().zip(&after).any(|(a, b)| !same_pose_bits(a, b))
                        {
                            return Err(format!("op {n}: round trip of {} moved another object", id(*i)));
                        }
                        scene = released;
                        done[2] += 1;
                    }
                }
                scene.check_invariants().map_err(|e| format!("op {n} {op:?}: {e}"))?;
                continue;
            }
        };
        let (next, observation) = dispatch(&registry, &engine, action, &input, &scene);
        next.check_invariants()
            .map_err(|e| format!("op {n} {action}({input}): {e} [{observation}]"))?;
        let changed = observation.starts_with("You have");
        match (changed, action) {
            (true, "pick_object") => done[0] += 1,
            (true, "place_object") => done[1] += 1,
            _ => {}
        }
        if !changed && next != before {
            return Err(format!(
                "op {n} {action}({input}) failed but changed the scene: {observation}"
            ));
        }
        let count = next.objects().len() + usize::from(next.held().is_some());
        if count != total {
            return Err(format!("op {n}: object count {count} != {total}"));
        }
        scene = next;
    }
    Ok(done)
}
