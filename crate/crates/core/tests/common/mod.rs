//! Finite-difference gradient suite shared by the gradient and acceptance
//! test targets.

use floodrisk_core::autodiff::{Tape, Var};
use floodrisk_core::clustering::{
    ancillary_distribution, ancillary_distribution_on, autoencoder_forward_on, fused_gcn_forward_on,
    kl_from_log_on, reconstruction_loss_on, target_distribution, AutoencoderVars, DenseLayer, KernelScale,
};
use floodrisk_core::gradcheck::{check_gradients, GradCheckConfig};
use floodrisk_core::graph_learner::{
    contrastive_embed_on, embed_for_similarity_on, learned_adjacency_on, nt_xent_loss_on, EncoderVars,
    NtXentDenominator,
};
use floodrisk_core::{Matrix, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn symmetric(n: usize, seed: u64) -> Matrix {
    let r = random(n, n, 0.1, 1.0, seed);
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s.set(i, j, 0.5 * (r.get(i, j) + r.get(j, i))).unwrap();
            }
        }
    }
    s
}

/// Contracts a matrix against fixed random weights so every entry matters.
fn probe(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.value(v).shape();
    let w = tape.constant(random(r, c, -1.0, 1.0, seed ^ 0x9e37));
    let prod = tape.mul(v, w)?;
    tape.sum(prod)
}

fn assert_gradients<F>(name: &str, inputs: &[Matrix], build: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let report = check_gradients(inputs, build, GradCheckConfig::default()).unwrap();
    assert!(
        report.passed(),
        "{name}: {} of {} entries disagree, first {:?}",
        report.mismatches.len(),
        report.checked,
        report.mismatches.first()
    );
    assert!(report.checked > 0, "{name}");
}

pub fn elementwise_and_linear_ops() {
    let a = random(5, 4, -1.0, 1.0, 1);
    let b = random(5, 4, -1.0, 1.0, 2);
    let c = random(4, 3, -1.0, 1.0, 3);
    let bias = random(1, 4, -1.0, 1.0, 4);
    let pos = random(5, 4, 0.5, 2.0, 5);

    assert_gradients("matmul", &[a.clone(), c.clone()], |t, v| {
        let y = t.matmul(v[0], v[1])?;
        probe(t, y, 10)
    });
    assert_gradients("matmul_t", &[a.clone(), b.clone()], |t, v| {
        let y = t.matmul_t(v[0], v[1])?;
        probe(t, y, 11)
    });
    assert_gradients("transpose", std::slice::from_ref(&a), |t, v| {
        let y = t.transpose(v[0])?;
        probe(t, y, 12)
    });
    assert_gradients("add sub mul", &[a.clone(), b.clone()], |t, v| {
        let s = t.add(v[0], v[1])?;
        let d = t.sub(v[0], v[1])?;
        let y = t.mul(s, d)?;
        probe(t, y, 13)
    });
    assert_gradients("add_row scale add_scalar", &[a.clone(), bias], |t, v| {
        let y = t.add_row(v[0], v[1])?;
        let y = t.scale(y, -1.7)?;
        let y = t.add_scalar(y, 0.3)?;
        let y = t.mul(y, y)?;
        probe(t, y, 14)
    });
    assert_gradients("relu", std::slice::from_ref(&a), |t, v| {
        let y = t.relu(v[0])?;
        probe(t, y, 15)
    });
    assert_gradients("clamp", std::slice::from_ref(&a), |t, v| {
        let y = t.clamp(v[0], -0.5, 0.5)?;
        probe(t, y, 16)
    });
    assert_gradients("powf log", std::slice::from_ref(&pos), |t, v| {
        let y = t.powf(v[0], -1.5)?;
        let l = t.log(v[0])?;
        let y = t.add(y, l)?;
        probe(t, y, 17)
    });
    assert_gradients("mean", std::slice::from_ref(&a), |t, v| {
        let y = t.mul(v[0], v[0])?;
        t.mean(y)
    });
    assert_gradients("diag", &[random(5, 5, -1.0, 1.0, 6)], |t, v| {
        let y = t.diag(v[0])?;
        probe(t, y, 18)
    });
}

pub fn row_wise_ops() {
    let a = random(6, 4, -1.0, 1.0, 20);
    let pos = random(6, 4, 0.2, 1.5, 21);
    assert_gradients("row_l2_normalize", std::slice::from_ref(&a), |t, v| {
        let y = t.row_l2_normalize(v[0])?;
        probe(t, y, 22)
    });
    assert_gradients("row_softmax", std::slice::from_ref(&a), |t, v| {
        let y = t.row_softmax(v[0])?;
        probe(t, y, 23)
    });
    assert_gradients("row_log_softmax", std::slice::from_ref(&a), |t, v| {
        let y = t.row_log_softmax(v[0])?;
        probe(t, y, 24)
    });
    assert_gradients("row_sum_normalize", &[pos], |t, v| {
        let y = t.row_sum_normalize(v[0])?;
        probe(t, y, 25)
    });
    let sq = random(6, 6, -1.0, 1.0, 26);
    for exclude in [false, true] {
        assert_gradients("row_log_sum_exp", std::slice::from_ref(&sq), |t, v| {
            let y = t.row_log_sum_exp(v[0], exclude)?;
            probe(t, y, 27)
        });
    }
    assert_gradients("squared_distances", &[a, random(3, 4, -1.0, 1.0, 28)], |t, v| {
        let y = t.squared_distances(v[0], v[1])?;
        probe(t, y, 29)
    });
    assert_gradients("gcn_normalize", &[symmetric(6, 30)], |t, v| {
        let y = t.gcn_normalize(v[0])?;
        probe(t, y, 31)
    });
}

pub fn contrastive_loss_gradients() {
    let zk = random(6, 4, -1.0, 1.0, 40);
    let zl = random(6, 4, -1.0, 1.0, 41);
    for denominator in [NtXentDenominator::Standard, NtXentDenominator::NegativesOnly] {
        assert_gradients("nt_xent", &[zk.clone(), zl.clone()], |t, v| {
            nt_xent_loss_on(t, v[0], v[1], 0.5, denominator)
        });
    }
}

pub fn graph_learner_pipeline_gradients() {
    let (n, d, h, p) = (5, 4, 3, 2);
    let x = random(n, d, 0.0, 1.0, 50);
    let omega = random(d, d, 0.2, 1.0, 51);
    let params = [
        random(d, h, -1.0, 1.0, 52),
        random(h, h, -1.0, 1.0, 53),
        random(h, p, -1.0, 1.0, 54),
        random(1, p, -0.5, 0.5, 55),
        random(p, p, -1.0, 1.0, 56),
        random(1, p, -0.5, 0.5, 57),
    ];
    let anchor = symmetric(n, 58);
    let mut inputs = vec![omega];
    inputs.extend(params.iter().cloned());
    assert_gradients("learned graph contrastive loss", &inputs, |t, v| {
        let xv = t.constant(x.clone());
        let e = embed_for_similarity_on(t, xv, &v[..1])?;
        let learned = learned_adjacency_on(t, e)?;
        let enc = EncoderVars {
            gcn1: v[1],
            gcn2: v[2],
            proj1_w: v[3],
            proj1_b: v[4],
            proj2_w: v[5],
            proj2_b: v[6],
        };
        let a = t.constant(anchor.clone());
        let za = contrastive_embed_on(t, a, xv, &enc)?;
        let zl = contrastive_embed_on(t, learned, xv, &enc)?;
        nt_xent_loss_on(t, za, zl, 0.5, NtXentDenominator::Standard)
    });
}

fn layer(vars: &[Var], at: usize) -> DenseLayer {
    DenseLayer {
        weight: vars[at],
        bias: vars[at + 1],
    }
}

pub fn reconstruction_loss_gradients() {
    let (n, d, h) = (6, 4, 3);
    let x = random(n, d, -1.0, 1.0, 60);
    let inputs = vec![
        random(d, h, -1.0, 1.0, 61),
        random(1, h, -0.5, 0.5, 62),
        random(h, d, -1.0, 1.0, 63),
        random(1, d, -0.5, 0.5, 64),
    ];
    assert_gradients("reconstruction", &inputs, |t, v| {
        let xv = t.constant(x.clone());
        let ae = AutoencoderVars {
            encoder: vec![layer(v, 0)],
            decoder: vec![layer(v, 2)],
        };
        let out = autoencoder_forward_on(t, xv, &ae)?;
        reconstruction_loss_on(t, xv, out.reconstruction)
    });
}

pub fn clustering_loss_gradients() {
    let (n, k, h) = (6, 3, 3);
    let hid = random(n, h, -1.0, 1.0, 70);
    let centers = random(k, h, -1.0, 1.0, 71);
    for scale in [KernelScale::DegreesOfFreedom, KernelScale::Half] {
        let q0 = ancillary_distribution(&hid, &centers, 1.0, scale).unwrap();
        let p = target_distribution(&q0).unwrap();
        assert_gradients("target loss", &[hid.clone(), centers.clone()], |t, v| {
            let q = ancillary_distribution_on(t, v[0], v[1], 1.0, scale)?;
            let log_q = t.log(q)?;
            kl_from_log_on(t, &p, log_q)
        });
        let scores = random(n, k, -1.0, 1.0, 72);
        assert_gradients("clustering loss", &[scores], |t, v| {
            let log_z = t.row_log_softmax(v[0])?;
            kl_from_log_on(t, &p, log_z)
        });
    }
}

pub fn total_objective_gradients() {
    let (n, d, h1, h2, k) = (5, 4, 3, 2, 2);
    let x = random(n, d, -1.0, 1.0, 80);
    let adj = symmetric(n, 81);
    let inputs = vec![
        random(d, h1, -1.0, 1.0, 82),
        random(1, h1, -0.5, 0.5, 83),
        random(h1, h2, -1.0, 1.0, 84),
        random(1, h2, -0.5, 0.5, 85),
        random(h2, h1, -1.0, 1.0, 86),
        random(1, h1, -0.5, 0.5, 87),
        random(h1, d, -1.0, 1.0, 88),
        random(1, d, -0.5, 0.5, 89),
        random(d, h1, -1.0, 1.0, 90),
        random(h1, h2, -1.0, 1.0, 91),
        random(h2, k, -1.0, 1.0, 92),
        random(k, h2, -1.0, 1.0, 93),
    ];
    let p = Matrix::from_rows(&[
        vec![0.9, 0.1],
        vec![0.2, 0.8],
        vec![0.6, 0.4],
        vec![0.3, 0.7],
        vec![0.5, 0.5],
    ])
    .unwrap();
    let (alpha, beta, fusion) = (0.1, 0.01, 0.5);
    assert_gradients("total objective", &inputs, |t, v| {
        let xv = t.constant(x.clone());
        let ae = AutoencoderVars {
            encoder: vec![layer(v, 0), layer(v, 2)],
            decoder: vec![layer(v, 4), layer(v, 6)],
        };
        let out = autoencoder_forward_on(t, xv, &ae)?;
        let res = reconstruction_loss_on(t, xv, out.reconstruction)?;
        let a = t.constant(adj.clone());
        let norm = t.gcn_normalize(a)?;
        let gcn = fused_gcn_forward_on(t, xv, norm, &out.hidden, &v[8..10], v[10], fusion)?;
        let log_z = t.row_log_softmax(gcn.scores)?;
        let clu = kl_from_log_on(t, &p, log_z)?;
        let bottleneck = *out.hidden.last().unwrap();
        let q = ancillary_distribution_on(t, bottleneck, v[11], 1.0, KernelScale::DegreesOfFreedom)?;
        let log_q = t.log(q)?;
        let ta = kl_from_log_on(t, &p, log_q)?;
        let clu = t.scale(clu, alpha)?;
        let ta = t.scale(ta, beta)?;
        let sum = t.add(res, clu)?;
        t.add(sum, ta)
    });
}

/// Every check above, by name.
#[allow(dead_code)]
pub const SUITE: [(&str, fn()); 7] = [
    ("tape ops", elementwise_and_linear_ops),
    ("row ops", row_wise_ops),
    ("contrastive loss", contrastive_loss_gradients),
    ("graph learner", graph_learner_pipeline_gradients),
    ("reconstruction loss", reconstruction_loss_gradients),
    ("clustering and target losses", clustering_loss_gradients),
    ("total objective", total_objective_gradients),
];
