use std::process::Command;

fn main() {
    let version = env!("CARGO_PKG_VERSION");
    let describe = Command::new("git")
        .args(["describe", "--tags", "--always"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    let full = match describe {
        Some(d) if d.starts_with('v') => d,
        Some(hash) => format!("v{version}-g{hash}"),
        None => format!("v{version}"),
    };
    println!("cargo:rustc-env=OTAFL_VERSION={full}");
    println!("cargo:rerun-if-changed=build.rs");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
