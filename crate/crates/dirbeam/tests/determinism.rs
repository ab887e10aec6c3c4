//! Identical scenario + options must produce byte-identical output files.

use dirbeam::scenario::{self, RunOptions};

#[test]
fn repeated_runs_write_identical_csv() {
    let s = scenario::bundled("patch_axial", None).unwrap();
    let base = std::env::temp_dir().join(format!("dirbeam_det_{}", std::process::id()));
    let dirs = [base.join("a"), base.join("b")];
    for d in &dirs {
        let opts = RunOptions {
            out_dir: Some(d.clone()),
            log_residuals: true,
            ..Default::default()
        };
        scenario::run(&s, &opts).unwrap();
    }
    for file in ["history.csv", "residuals.csv", "scenario_echo.json"] {
        let a = std::fs::read(dirs[0].join(file)).unwrap();
        let b = std::fs::read(dirs[1].join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let _ = std::fs::remove_dir_all(&base);
}
