use fqi_lab::experiment::{ClassConfig, ExperimentConfig};
use fqi_lab::Error;

#[test]
fn defaults_and_blocks_parse() {
    let cfg = ExperimentConfig::parse("scenario = \"two_room\"\n").unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    let cfg = ExperimentConfig::parse(
        "scenario = \"drift_diffusion\"\nK = 7\ndelta = 0.05\nseeds = [1, 2]\n\n[class]\nkind = \"rkhs\"\nnorm_bound = 3.0\n",
    )
    .unwrap();
    assert_eq!((cfg.k, cfg.delta, cfg.seeds.as_slice()), (7, 0.05, &[1u64, 2][..]));
    assert!(matches!(cfg.class, Some(ClassConfig::Rkhs { norm_bound, .. }) if norm_bound == 3.0));
    let sc = cfg.scenario().unwrap();
    assert_eq!(sc.mdp.n_states(), 16);
}

#[test]
fn missing_class_names_the_key() {
    let cfg = ExperimentConfig::parse("scenario = \"two_room\"\n").unwrap();
    let err = cfg.require_class().unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("class"), "{err}");
}

#[test]
fn invalid_configs_are_rejected() {
    for body in [
        "scenario = \"two_room\"\ndelta = 0.0\n",
        "scenario = \"two_room\"\nn = 0\n",
        "scenario = \"two_room\"\nK = 0\n",
        "scenario = \"two_room\"\nseeds = []\n",
        "scenario = \"two_room\"\nmdp_file = \"x.txt\"\n",
        "delta = 0.1\n",
        "scenario = \"two_room\"\nunknown = true\n",
        "scenario = \"two_room\"\n[class]\nkind = \"quadratic\"\n",
        "scenario = \"two_room\"\n[class]\nkind = \"linear\"\n",
        "scenario = 3\n",
        "scenario = \"two_room\"\n[scaling]\nn_grid = []\n",
    ] {
        assert!(matches!(ExperimentConfig::parse(body), Err(Error::Config(_))), "{body}");
    }
    let err = ExperimentConfig::parse("delta = 0.1\n").unwrap_err().to_string();
    assert!(err.contains("scenario"), "{err}");
    let cfg = ExperimentConfig::parse("scenario = \"nowhere\"\n").unwrap();
    assert!(cfg.scenario().is_err());
}

#[test]
fn clip_below_floor_is_a_config_error() {
    let cfg = ExperimentConfig::parse(
        "scenario = \"two_room\"\n[class]\nkind = \"linear\"\nweight_bound = 1.0\nclip = 2.0\n",
    )
    .unwrap();
    let sc = cfg.scenario().unwrap();
    let floor = sc.mdp.r_max() / (1.0 - sc.mdp.gamma());
    let err = cfg.class.unwrap().build(sc.mdp.n_states(), sc.mdp.n_actions(), floor).unwrap_err();
    assert!(err.to_string().contains("clip"), "{err}");
}

#[test]
fn digest_tracks_content() {
    let a = ExperimentConfig::default();
    let b = ExperimentConfig { n: 65, ..ExperimentConfig::default() };
    assert_eq!(a.digest(), ExperimentConfig::default().digest());
    assert_ne!(a.digest(), b.digest());
}
