use std::fs;
use std::os::unix::fs::symlink;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const DENY: [&str; 4] = ["test/**", "test", "reference/**", "reference"];

pub const MARKERS: [&str; 3] = ["SECRET_TEST", "SECRET_REF", "SECRET_OUTSIDE"];

pub const PARTS: [&str; 18] = [
    ".", "..", "...", "src", "test", "reference", "escape", "link_to_test", "ref.sol", "A.sol", "Secret.t.sol",
    "King.sol", "outside", "secret.txt", "", "TEST", "src/..", "test/../test",
];

pub fn build(tmp: &Path) -> PathBuf {
    let root = tmp.join("repo");
    let outside = tmp.join("outside");
    fs::create_dir_all(root.join("src")).unwrap();
    fs::create_dir_all(root.join("test")).unwrap();
    fs::create_dir_all(root.join("reference")).unwrap();
    fs::create_dir_all(&outside).unwrap();
    fs::write(root.join("src/A.sol"), "contract A {}\n").unwrap();
    fs::write(root.join("test/Secret.t.sol"), "// SECRET_TEST\n").unwrap();
    fs::write(root.join("reference/King.sol"), "// SECRET_REF\n").unwrap();
    fs::write(outside.join("secret.txt"), "SECRET_OUTSIDE\n").unwrap();
    symlink(&outside, root.join("src/escape")).unwrap();
    symlink("../test", root.join("src/link_to_test")).unwrap();
    symlink("../reference/King.sol", root.join("src/ref.sol")).unwrap();
    symlink(outside.join("secret.txt"), root.join("leak.txt")).unwrap();
    root
}

pub fn random_path(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..6);
    let mut parts: Vec<&str> = (0..n).map(|_| *PARTS.choose(rng).unwrap()).collect();
    if rng.gen_bool(0.5) {
        parts.insert(rng.gen_range(0..=parts.len()), "..");
    }
    let mut path = parts.join("/");
    match rng.gen_range(0..6) {
        0 => path.insert(0, '/'),
        1 => path.insert_str(0, "./"),
        2 => path.push('/'),
        3 => path = path.replace('/', "//"),
        _ => {}
    }
    path
}
