use lrgm::experiment::{data_rng, match_rng, simulate_pair};
use lrgm::io::{
    load_embedding, load_frequencies, load_matrix, load_permutation, save_embedding, save_frequencies, save_matrix,
    save_permutation, MatrixFormat,
};
use lrgm::laplace::{sample_frequencies, LaplaceObjective};
use lrgm::pipeline::{match_graphs, rmse_metric};
use lrgm::spectral::embed;
use lrgm::{GraphonSpec, LossConfig, NoiseMode, SearchConfig};
use nalgebra::DMatrix;

#[test]
fn saved_graphs_match_like_the_originals() {
    let dir = tempfile::tempdir().unwrap();
    let pair = simulate_pair(&GraphonSpec::graphon3(), 80, NoiseMode::Gaussian { sigma: 0.0 }, true, &mut data_rng(2))
        .unwrap();
    for (name, format) in [("a1.csv", MatrixFormat::Csv), ("a2.bin", MatrixFormat::Binary)] {
        let m = if name == "a1.csv" { &pair.a1 } else { &pair.a2 };
        save_matrix(&dir.path().join(name), m, format).unwrap();
    }
    save_permutation(&dir.path().join("perm.txt"), &pair.perm_star).unwrap();
    let a1 = load_matrix(&dir.path().join("a1.csv")).unwrap();
    let a2 = load_matrix(&dir.path().join("a2.bin")).unwrap();
    // CSV keeps the shortest round-tripping decimal, binary the bits
    assert_eq!(a1, pair.a1);
    assert_eq!(a2, pair.a2);
    let perm_star = load_permutation(&dir.path().join("perm.txt")).unwrap();
    assert_eq!(perm_star, pair.perm_star);

    let (loss, search) = (LossConfig::default(), SearchConfig::default());
    let from_files = match_graphs(&a1, &a2, 4, &loss, &search, &mut match_rng(9)).unwrap();
    let direct = match_graphs(&pair.a1, &pair.a2, 4, &loss, &search, &mut match_rng(9)).unwrap();
    assert_eq!(from_files.perm_hat, direct.perm_hat);
    assert_eq!(from_files.loss.to_bits(), direct.loss.to_bits());
    let perm_hat = from_files.perm_hat.unwrap();
    assert_eq!(perm_hat, perm_star);
    assert!(rmse_metric(&pair.prob.w, &perm_hat, &perm_star).unwrap() < 1e-12);
}

#[test]
fn embeddings_and_frequencies_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pair = simulate_pair(&GraphonSpec::graphon2(), 50, NoiseMode::Gaussian { sigma: 0.3 }, true, &mut data_rng(4))
        .unwrap();
    let e = embed(&pair.a1, 3).unwrap();
    let path = dir.path().join("x.bin");
    save_embedding(&path, &e, MatrixFormat::Binary).unwrap();
    let back = load_embedding(&path).unwrap();
    assert_eq!(back.positions, e.positions);
    assert_eq!(back.eigenvalues, e.eigenvalues);
    assert_eq!((back.d_pos, back.d_neg), (e.d_pos, e.d_neg));

    let cfg = LossConfig {
        m_s: 64,
        ..LossConfig::default()
    };
    let freqs = sample_frequencies(&cfg, 3, &mut match_rng(1)).unwrap();
    let fpath = dir.path().join("freqs.csv");
    save_frequencies(&fpath, &freqs).unwrap();
    let fback = load_frequencies(&fpath).unwrap();
    assert_eq!(fback.to_matrix(), freqs.to_matrix());
    assert_eq!((fback.gamma(), fback.r()), (freqs.gamma(), freqs.r()));

    // the reloaded sample gives the same objective to the bit
    let x = e.cloud().unwrap();
    let o = DMatrix::<f64>::identity(3, 3);
    let a = LaplaceObjective::new(&x, &x, &freqs, &cfg).unwrap().loss(&o);
    let b = LaplaceObjective::new(&x, &x, &fback, &cfg).unwrap().loss(&o);
    assert_eq!(a.to_bits(), b.to_bits());
}
