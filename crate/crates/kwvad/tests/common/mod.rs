//! Synthetic surveillance datasets for end-to-end runs: a manifest, a stub
//! description map and a config, all in one directory.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kwvad_core::rng::SeededRng;

/// How descriptions relate to labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Anomalous frames mention a bicycle with probability `bicycle_rate`,
    /// otherwise another wheeled intruder; normal frames never do.
    Planted,
    /// Every anomalous frame mentions a bicycle, every normal frame is a
    /// pedestrian scene.
    Perfect,
    /// Descriptions drawn independently of the label.
    Random,
    /// Every frame gets the same description.
    Identical,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub frames: usize,
    pub videos: usize,
    /// Share of each video's frames that are anomalous, as one contiguous run.
    pub anomalous_fraction: f64,
    pub bicycle_rate: f64,
    pub mode: Mode,
    /// Seed for the description generator (not the pipeline).
    pub data_seed: u64,
    pub pipeline_seed: u64,
    pub profile: &'static str,
    pub induction_samples: usize,
    /// Extra TOML appended to the config.
    pub extra: String,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            frames: 2000,
            videos: 20,
            anomalous_fraction: 0.25,
            bicycle_rate: 0.9,
            mode: Mode::Planted,
            data_seed: 1,
            pipeline_seed: 42,
            profile: "ped2",
            induction_samples: 20,
            extra: String::new(),
        }
    }
}

const SUBJECTS: &[&str] = &[
    "A man",
    "A woman",
    "Two people",
    "A group of pedestrians",
    "A student",
    "Several people",
    "An older couple",
];
const WALKING: &[&str] = &[
    "walking along",
    "strolling down",
    "standing on",
    "crossing",
    "chatting on",
    "waiting near",
    "jogging slowly along",
];
const PLACES: &[&str] = &[
    "the walkway",
    "the paved path",
    "the campus sidewalk",
    "the plaza",
    "the footpath",
];
const EXTRAS: &[&str] = &[
    "",
    " with trees in the background",
    " next to a lamp post",
    " beside the grass lawn",
    " carrying a backpack",
    " near some benches",
    " under a cloudy sky",
];
const INTRUDERS: &[&str] = &[
    "A skateboarder rolls quickly across",
    "A small cart drives down",
    "A person on a skateboard weaves between pedestrians on",
    "A utility truck is parked on",
    "A golf cart moves along",
];

fn pick<'a>(rng: &mut SeededRng, items: &[&'a str]) -> &'a str {
    items[rng.below(items.len() as u64) as usize]
}

pub fn normal_text(rng: &mut SeededRng) -> String {
    format!(
        "{} {} {}{}.",
        pick(rng, SUBJECTS),
        pick(rng, WALKING),
        pick(rng, PLACES),
        pick(rng, EXTRAS)
    )
}

pub fn bicycle_text(rng: &mut SeededRng) -> String {
    let mut s = format!(
        "{} riding a bicycle on {}{}",
        pick(rng, SUBJECTS),
        pick(rng, PLACES),
        pick(rng, EXTRAS)
    );
    if rng.unit() < 0.3 {
        s.push_str(" while a skateboarder passes by");
    }
    s.push('.');
    s
}

pub fn intruder_text(rng: &mut SeededRng) -> String {
    format!("{} {}{}.", pick(rng, INTRUDERS), pick(rng, PLACES), pick(rng, EXTRAS))
}

pub struct Frame {
    pub id: String,
    pub video: String,
    pub anomalous: bool,
    pub text: String,
}

pub fn frames(scenario: &Scenario) -> Vec<Frame> {
    let mut rng = SeededRng::new(scenario.data_seed, 7);
    let per_video = scenario.frames / scenario.videos;
    let run = (per_video as f64 * scenario.anomalous_fraction).round() as usize;
    let start = per_video / 2;
    let mut out = Vec::with_capacity(scenario.frames);
    for i in 0..scenario.frames {
        let v = (i / per_video).min(scenario.videos - 1);
        let pos = i - v * per_video;
        let anomalous = (start..start + run).contains(&pos);
        let text = match scenario.mode {
            Mode::Identical => "A man riding a bicycle past people walking on the walkway.".to_string(),
            Mode::Random => {
                if rng.unit() < 0.5 {
                    bicycle_text(&mut rng)
                } else {
                    normal_text(&mut rng)
                }
            }
            Mode::Perfect if anomalous => bicycle_text(&mut rng),
            Mode::Planted if anomalous => {
                if rng.unit() < scenario.bicycle_rate {
                    bicycle_text(&mut rng)
                } else {
                    intruder_text(&mut rng)
                }
            }
            _ => normal_text(&mut rng),
        };
        out.push(Frame {
            id: format!("v{v:02}_f{pos:04}"),
            video: format!("v{v:02}"),
            anomalous,
            text,
        });
    }
    out
}

pub fn render_stub(frames: &[Frame]) -> String {
    let mut s = String::new();
    for f in frames {
        writeln!(s, "{}\t{}", f.id, f.text).unwrap();
    }
    s
}

/// Writes everything under `dir` and returns the config path. All frames
/// share one small image: the description cache is keyed by frame id as
/// well as image content.
pub fn write(dir: &Path, scenario: &Scenario) -> PathBuf {
    let frames = frames(scenario);
    image::RgbImage::from_fn(4, 4, |x, y| image::Rgb([x as u8 * 40, y as u8 * 40, 90]))
        .save(dir.join("frame.png"))
        .unwrap();
    let mut manifest = String::from("# frame_id\tvideo_id\tpath\tlabel\n");
    for f in &frames {
        writeln!(manifest, "{}\t{}\tframe.png\t{}", f.id, f.video, u8::from(f.anomalous)).unwrap();
    }
    std::fs::write(dir.join("frames.tsv"), manifest).unwrap();
    std::fs::write(dir.join("stub.tsv"), render_stub(&frames)).unwrap();
    let config = format!(
        "seed = {seed}\n\n[dataset]\nmanifest = \"frames.tsv\"\nname = \"synthetic\"\nprofile = \"{profile}\"\n\n\
         [provider]\nstub = \"stub.tsv\"\nmodel_id = \"stub\"\nmax_concurrency = 1\n\n\
         [induction]\nsamples = {n}\n\n[output]\ndir = \"out\"\n{extra}",
        seed = scenario.pipeline_seed,
        profile = scenario.profile,
        n = scenario.induction_samples,
        extra = scenario.extra,
    );
    let path = dir.join("kwvad.toml");
    std::fs::write(&path, config).unwrap();
    path
}

pub fn kwvad(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kwvad"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env("RUST_LOG", "error")
        .env_remove("KWVAD_API_KEY")
        .output()
        .expect("running kwvad")
}

/// Runs a command that must succeed, returning stdout.
pub fn kwvad_ok(config: &Path, args: &[&str]) -> String {
    let out = kwvad(config, args);
    assert!(
        out.status.success(),
        "kwvad {args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}
