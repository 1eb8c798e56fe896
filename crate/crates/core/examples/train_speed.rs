//! Times minibatch gradient evaluation for the default architecture.

use std::time::Instant;

use qcnn_var::conv::{batch_gradient, QcnnModel, Architecture};
use qcnn_var::data::WindowSet;
use qcnn_var::rng::Philox;

fn main() {
    let mut rng = Philox::new(1);
    let series: Vec<f64> = (0..2000).map(|_| rng.normal()).collect();
    let mut set = WindowSet::default();
    for s in 0..1024 {
        set.inputs.push(series[s..s + 128].to_vec());
        set.targets.push(series[s + 1..s + 129].to_vec());
        set.origins.push(("bench".into(), s));
    }
    let model = QcnnModel::init(Architecture::default(), 0.05, 3).unwrap();
    let batch: Vec<usize> = (0..1024).collect();
    let start = Instant::now();
    let reps = 5;
    let mut acc = 0.0;
    for _ in 0..reps {
        let (l, g) = batch_gradient(&model, &set, &batch);
        acc += l + g[0];
    }
    let per = start.elapsed().as_secs_f64() / (reps * 1024) as f64;
    println!("{:.2} us per window gradient ({acc:.3})", per * 1e6);
}
