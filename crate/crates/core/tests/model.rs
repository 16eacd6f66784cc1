mod common;

use common::scenario_dir;
use wbsim::model::{load_model, validate_model, Foot, FootGeometry, LoopClosure, ModelError, ModelOptions};

fn arm_urdf() -> String {
    std::fs::read_to_string(scenario_dir().join("models/two_link_arm.urdf")).unwrap()
}

#[test]
fn shipped_urdf_loads_with_fused_tool_frame() {
    let model = load_model(&arm_urdf(), &ModelOptions::default()).unwrap();
    assert_eq!(model.dof_names(), vec!["shoulder", "elbow"]);
    assert!(!model.is_floating());
    assert!(model.frame("tool").is_some());
    assert!((model.total_mass() - 3.6).abs() < 1e-12);
    assert_eq!(model.joints()[0].position_limits, Some((-2.5, 2.5)));
    assert!(validate_model(&model).is_empty());
}

#[test]
fn options_add_feet_base_and_closures() {
    let feet = vec![Foot {
        link_name: "tool".into(),
        geometry: FootGeometry::Spherical { radius: 0.02, center_offset: nalgebra::Vector3::zeros() },
    }];
    let model = load_model(&arm_urdf(), &ModelOptions { floating: true, feet, loop_closures: vec![] }).unwrap();
    assert_eq!(model.nv(), 8);
    assert_eq!(model.vertex_count(), 1);

    let bad = ModelOptions { loop_closures: vec![LoopClosure::new("tool", "missing")], ..Default::default() };
    assert!(load_model(&arm_urdf(), &bad).is_err());
}

#[test]
fn broken_inertia_is_a_validation_error() {
    let text = arm_urdf().replacen("ixx=\"0.001\"", "ixx=\"-1\"", 1);
    match load_model(&text, &ModelOptions::default()) {
        Err(ModelError::Validation(v)) => assert!(!v.is_empty()),
        other => panic!("{other:?}"),
    }
}
