#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use d4_core::embedkit::planted::{planted_embedding, PlantedConfig, PlantedEmbedding};
use d4_core::embedkit::{save_embeddings, BinaryLayout, EmbeddingFormat};

pub fn d4(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_d4"))
        .args(args)
        .current_dir(cwd)
        .env("D4_NUM_THREADS", "1")
        .output()
        .expect("run d4")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// First number following `key` in the command's standard output.
pub fn stdout_value(o: &Output, key: &str) -> f64 {
    let text = stdout(o);
    let rest = &text[text.find(key).unwrap_or_else(|| panic!("`{key}` not in {text}")) + key.len()..];
    rest.split_whitespace().next().unwrap().parse().unwrap()
}

/// Planted embedding and word lists written to `dir`.
pub struct Fixture {
    pub planted: PlantedEmbedding,
    pub embedding: PathBuf,
    pub lexicon: PathBuf,
    pub professions: PathBuf,
    pub weat: PathBuf,
}

fn sections(sets: &[(&str, &[String])]) -> String {
    let mut s = String::new();
    for (name, words) in sets {
        s.push_str(&format!("[{name}]\n"));
        for w in words.iter() {
            s.push_str(w);
            s.push('\n');
        }
    }
    s
}

pub fn fixture(dir: &Path) -> Fixture {
    let planted = planted_embedding(&PlantedConfig::default()).unwrap();
    let embedding = dir.join("planted.bin");
    save_embeddings(&embedding, &planted.embedding, EmbeddingFormat::Word2VecBinary, BinaryLayout::default()).unwrap();
    let lexicon = dir.join("lexicon.txt");
    std::fs::write(
        &lexicon,
        sections(&[("masculine", &planted.lexicon.masculine), ("feminine", &planted.lexicon.feminine)]),
    )
    .unwrap();
    let professions = dir.join("professions.txt");
    std::fs::write(&professions, planted.professions.join("\n")).unwrap();
    let weat = dir.join("weat.txt");
    let w = &planted.weat;
    std::fs::write(&weat, sections(&[("X", &w.x), ("Y", &w.y), ("A", &w.a), ("B", &w.b)])).unwrap();
    Fixture {
        planted,
        embedding,
        lexicon,
        professions,
        weat,
    }
}

pub const WORKED_X: &str = "1,0,1\n0,1,1\n1,0,0\n0,1,0\n";
pub const WORKED_Y: &str = "1\n1\n-1\n-1\n";
