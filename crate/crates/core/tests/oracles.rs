mod common;

use common::*;

const INSTANCES: usize = 60;
const TOL: f64 = 1e-6;

fn check(r: OracleReport) {
    assert!(r.instances >= 50);
    assert!(r.worst <= TOL, "{}: worst deviation {:e} over {} instances", r.op, r.worst, r.instances);
}

#[test]
fn conv2d_matches_naive_loops() {
    check(oracle_conv(INSTANCES, 11));
}

#[test]
fn pooling_matches_naive_loops() {
    check(oracle_pool(INSTANCES, 12));
}

#[test]
fn linear_matches_naive_loops() {
    check(oracle_linear(INSTANCES, 13));
}

#[test]
fn trilinear_matches_naive_loops() {
    check(oracle_trilinear(INSTANCES, 14));
}

#[test]
fn blend_matches_naive_loops() {
    check(oracle_blend(INSTANCES, 15));
}

#[test]
fn maxpool_tie_goes_to_first_in_scan_order() {
    use flowlut::tensor::{Backend, Graph};
    let x = flowlut::Tensor::new([1, 2, 2], vec![0.5, 0.5, 0.5, 0.5]).unwrap();
    let mut g = Graph::new();
    let v = g.param(&x);
    let p = g.maxpool2x2(&v).unwrap();
    let t = g.constant(flowlut::Tensor::new([1, 1, 1], vec![0.0]).unwrap());
    let loss = g.mse(&p, &t).unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(v).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
}
