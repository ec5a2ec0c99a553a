use std::process::Command;

fn main() {
    let stamp = Command::new("git")
        .args(["rev-parse", "--short=12", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into());
    println!("cargo:rustc-env=WONHAM_GIT_STAMP={stamp}");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
