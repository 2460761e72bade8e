use fedtank::data::load_idx;
use fedtank::training::*;

fn main() {
    let train = load_idx(
        "data/mnist/train-images-idx3-ubyte".as_ref(),
        "data/mnist/train-labels-idx1-ubyte".as_ref(),
    )
    .unwrap();
    let test = load_idx(
        "data/mnist/t10k-images-idx3-ubyte".as_ref(),
        "data/mnist/t10k-labels-idx1-ubyte".as_ref(),
    )
    .unwrap();
    for (lr, epochs, hidden) in [(0.1, 10, 64), (0.3, 10, 64), (0.5, 10, 64), (0.3, 30, 64), (0.5, 30, 64), (0.1, 30, 128)] {
        let arch = Architecture::mlp1(784, hidden, 10);
        let cfg = TrainConfig { learning_rate: lr, batch_size: 32, local_epochs: epochs, seed: 1 };
        let model = local_train(&init_model(&arch, 3).unwrap(), &train, &arch, &cfg).unwrap();
        let rep = evaluate(&model, &test, &arch).unwrap();
        let tr = evaluate(&model, &train, &arch).unwrap();
        println!("lr={lr} epochs={epochs} h={hidden}: test={:.4} train={:.4} class0={:.4}", rep.overall_accuracy, tr.overall_accuracy, rep.per_class_accuracy[&0]);
    }
}
