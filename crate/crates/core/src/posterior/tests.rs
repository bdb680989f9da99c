use super::*;

#[test]
fn validation_and_round_trips() {
    assert!(SkeletonPosterior::constant(3, 1.2).is_err());
    let mut m = DMatrix::zeros(3, 3);
    m[(0, 1)] = 0.3;
    assert!(SkeletonPosterior::from_matrix(m.clone()).is_err());
    m[(1, 0)] = 0.3;
    m[(1, 2)] = 1.0 / 7.0;
    m[(2, 1)] = 1.0 / 7.0;
    let p = SkeletonPosterior::from_matrix(m).unwrap();
    let mut buf = Vec::new();
    p.write_csv(&mut buf).unwrap();
    assert_eq!(SkeletonPosterior::read_csv(buf.as_slice()).unwrap(), p);
    let json = serde_json::to_string(&p).unwrap();
    assert_eq!(serde_json::from_str::<SkeletonPosterior>(&json).unwrap(), p);
    assert!(serde_json::from_str::<SkeletonPosterior>(r#"{"d":2,"p":[[0,2],[2,0]]}"#).is_err());
}
