use cloudpriv_core::leakage::{
    bayes_envelope_logloss, check_data_processing, cross_entropy_bits, entropy_bits, leakage_logloss, DiscreteJoint, StatisticMap,
};
use cloudpriv_core::simulate::GaussianStream;
use cloudpriv_core::DMatrix;

fn random_pmf(rng: &mut GaussianStream, len: usize) -> Vec<f64> {
    // Exponential weights give a uniform draw on the simplex; some cells are
    // zeroed to exercise the 0·log 0 convention.
    let mut w: Vec<f64> = (0..len).map(|_| if rng.next_uniform() < 0.15 { 0.0 } else { -rng.next_uniform().ln() }).collect();
    if w.iter().all(|v| *v == 0.0) {
        w[0] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

fn random_joint(rng: &mut GaussianStream, rows: usize, cols: usize) -> DiscreteJoint {
    let p = random_pmf(rng, rows * cols);
    DiscreteJoint::new(DMatrix::from_row_slice(rows, cols, &p)).unwrap()
}

fn dims(rng: &mut GaussianStream) -> (usize, usize) {
    (2 + (rng.next_uniform() * 5.0) as usize, 2 + (rng.next_uniform() * 5.0) as usize)
}

#[test]
fn envelope_is_proper() {
    let mut rng = GaussianStream::new(11, 0);
    for _ in 0..20 {
        let len = 2 + (rng.next_uniform() * 5.0) as usize;
        let p = random_pmf(&mut rng, len);
        let h = bayes_envelope_logloss(&p).unwrap().bits;
        assert!((h - entropy_bits(&p)).abs() < 1e-15);
        for _ in 0..100 {
            let q = random_pmf(&mut rng, len);
            assert!(cross_entropy_bits(&p, &q) >= h - 1e-12);
        }
        assert!((cross_entropy_bits(&p, &p) - h).abs() < 1e-15);
    }
}

#[test]
fn envelope_difference_equals_mutual_information() {
    let mut rng = GaussianStream::new(12, 0);
    for _ in 0..1000 {
        let (r, c) = dims(&mut rng);
        let l = leakage_logloss(&random_joint(&mut rng, r, c));
        assert!((l.envelope_difference - l.mutual_information).abs() <= 1e-12, "{l:?}");
        assert!(l.mutual_information >= -1e-12);
    }
}

#[test]
fn statistics_never_increase_leakage() {
    let mut rng = GaussianStream::new(13, 0);
    for _ in 0..500 {
        let (r, c) = dims(&mut rng);
        let joint = random_joint(&mut rng, r, c);
        let table = (0..r).map(|_| (rng.next_uniform() * r as f64) as usize).collect();
        let v = check_data_processing(&joint, &StatisticMap::new(table).unwrap()).unwrap();
        assert!(v.leakage_statistic <= v.leakage_original + 1e-12, "{v:?}");
    }
}

/// Joint in which the symbols of each group share one channel row, so
/// merging within groups is sufficient.
#[test]
fn sufficient_merges_preserve_leakage() {
    let mut rng = GaussianStream::new(14, 0);
    for _ in 0..50 {
        let (r, c) = dims(&mut rng);
        let groups = 1 + (rng.next_uniform() * r as f64) as usize;
        let label: Vec<usize> =
            (0..r).map(|x| if x < groups { x } else { (rng.next_uniform() * groups as f64) as usize }).collect();
        let rows: Vec<Vec<f64>> = (0..groups).map(|_| random_pmf(&mut rng, c)).collect();
        let p_x = random_pmf(&mut rng, r);
        let channel = DMatrix::from_fn(r, c, |x, y| rows[label[x]][y]);
        let joint = DiscreteJoint::from_channel(&p_x, &channel).unwrap();
        let v = check_data_processing(&joint, &StatisticMap::new(label).unwrap()).unwrap();
        assert!(v.sufficiency_holds, "{v:?}");
        assert!(v.leakage_equal(), "{v:?}");
    }
}

#[test]
fn pair_statistic_dropping_irrelevant_coordinate() {
    // X = (X₁, X₂) on {0,1}², encoded x = 2·x₁ + x₂; Y depends on X₁ only.
    let p_x = [0.1, 0.2, 0.3, 0.4];
    let row = |x1: usize| if x1 == 0 { [0.7, 0.2, 0.1] } else { [0.1, 0.3, 0.6] };
    let channel = DMatrix::from_fn(4, 3, |x, y| row(x / 2)[y]);
    let joint = DiscreteJoint::from_channel(&p_x, &channel).unwrap();
    let v = check_data_processing(&joint, &StatisticMap::new(vec![0, 0, 2, 2]).unwrap()).unwrap();
    assert!(v.sufficiency_holds);
    assert!(v.leakage_equal());
}

#[test]
fn merging_distinct_posteriors_loses_leakage() {
    // Symbols 1 and 2 see different channels; merging them is lossy.
    let channel = DMatrix::from_row_slice(3, 2, &[0.9, 0.1, 0.2, 0.8, 0.6, 0.4]);
    let joint = DiscreteJoint::from_channel(&[0.3, 0.3, 0.4], &channel).unwrap();
    let v = check_data_processing(&joint, &StatisticMap::new(vec![0, 1, 1]).unwrap()).unwrap();
    assert!(!v.sufficiency_holds);

    // Direct summation oracle.
    let mi = |p: &[[f64; 2]]| {
        let py = [p.iter().map(|r| r[0]).sum::<f64>(), p.iter().map(|r| r[1]).sum::<f64>()];
        let mut acc = 0.0;
        for r in p {
            let px: f64 = r.iter().sum();
            for y in 0..2 {
                if r[y] > 0.0 {
                    acc += r[y] * (r[y] / (px * py[y])).log2();
                }
            }
        }
        acc
    };
    let full = [[0.27, 0.03], [0.06, 0.24], [0.24, 0.16]];
    let merged = [[0.27, 0.03], [0.30, 0.40]];
    let gap = mi(&full) - mi(&merged);
    assert!(gap >= 1e-6);
    assert!((v.gap - gap).abs() < 1e-12);
}
