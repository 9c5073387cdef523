//! Independent reference implementations used to check the library. None of
//! this calls into the code under test except to build inputs.
#![allow(dead_code)]

use std::collections::BTreeMap;

use cocreate_core::sketch::{Choice, Parameter, Selections, Sketch};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const ALPHABET: &[&str] = &[
    "a", "b", "z", " ", "{", "}", "é", "ß", "日本", "🐄", ",", ".", "\"", "\\", "\n", "q", "0",
];

pub fn random_text(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

fn random_nonempty(rng: &mut ChaCha8Rng, max: usize) -> String {
    loop {
        let s = random_text(rng, max);
        if !s.is_empty() {
            return s;
        }
    }
}

fn random_name(rng: &mut ChaCha8Rng) -> String {
    const FIRST: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    const REST: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_";
    let len = rng.gen_range(0..8);
    let mut s = String::new();
    s.push(*FIRST.choose(rng).unwrap() as char);
    for _ in 0..len {
        s.push(*REST.choose(rng).unwrap() as char);
    }
    s
}

/// Escape by hand: the only way to write a literal brace is to double it.
fn escape(s: &str) -> String {
    s.replace('{', "{{").replace('}', "}}")
}

/// A valid sketch: 0–5 parameters, each used at least once, some repeated,
/// with arbitrary Unicode (including braces) in literals and options.
pub fn random_sketch(rng: &mut ChaCha8Rng) -> Sketch {
    let mut names: Vec<String> = Vec::new();
    for _ in 0..rng.gen_range(0..=5) {
        let n = random_name(rng);
        if !names.contains(&n) {
            names.push(n);
        }
    }
    let parameters: Vec<Parameter> = names
        .iter()
        .map(|n| Parameter {
            name: n.clone(),
            label: format!("L{}", random_text(rng, 5)),
            options: (0..rng.gen_range(1..=4)).map(|_| random_nonempty(rng, 8)).collect(),
            default_index: 0,
        })
        .collect();
    let mut slots = names.clone();
    for _ in 0..rng.gen_range(0..3) {
        if let Some(n) = names.choose(rng) {
            slots.push(n.clone());
        }
    }
    slots.shuffle(rng);
    let mut template = escape(&random_text(rng, 10));
    for s in &slots {
        template.push('{');
        template.push_str(s);
        template.push('}');
        template.push_str(&escape(&random_text(rng, 10)));
    }
    Sketch::new(None, template, parameters).expect("generated sketch is valid")
}

pub fn random_selections(rng: &mut ChaCha8Rng, sketch: &Sketch) -> Selections {
    let mut sel = Selections::new();
    for p in sketch.parameters() {
        let choice = if rng.gen_bool(0.25) {
            Choice::Custom(random_nonempty(rng, 8))
        } else {
            Choice::Option(rng.gen_range(0..p.options.len()))
        };
        sel.set(p.name.clone(), choice);
    }
    sel
}

pub fn selected_values(sketch: &Sketch, sel: &Selections) -> BTreeMap<String, String> {
    sketch
        .parameters()
        .iter()
        .map(|p| {
            let v = match sel.get(&p.name).unwrap() {
                Choice::Option(i) => p.options[*i].clone(),
                Choice::Custom(t) => t.clone(),
            };
            (p.name.clone(), v)
        })
        .collect()
}

/// Character-level template interpreter.
pub fn independent_render(template: &str, values: &BTreeMap<String, String>) -> String {
    let chars: Vec<char> = template.chars().collect();
    let mut out = String::new();
    let mut i = 0;
    while i < chars.len() {
        match (chars[i], chars.get(i + 1)) {
            ('{', Some('{')) | ('}', Some('}')) => {
                out.push(chars[i]);
                i += 2;
            }
            ('{', _) => {
                let close = chars[i..].iter().position(|c| *c == '}').unwrap() + i;
                let name: String = chars[i + 1..close].iter().collect();
                out.push_str(&values[&name]);
                i = close + 1;
            }
            (c, _) => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

/// W⁺ and the two-sided p by listing every sign assignment.
pub fn brute_force_wilcoxon(diffs: &[f64]) -> Option<(f64, f64)> {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return None;
    }
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    // midrank: #smaller + (#equal + 1) / 2
    let ranks: Vec<f64> = abs
        .iter()
        .map(|a| {
            let smaller = abs.iter().filter(|b| *b < a).count() as f64;
            let equal = abs.iter().filter(|b| *b == a).count() as f64;
            smaller + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let center = n as f64 * (n as f64 + 1.0) / 4.0;
    let target = (observed - center).abs();
    let mut extreme = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if (w - center).abs() >= target - 1e-9 {
            extreme += 1;
        }
    }
    Some((observed, extreme as f64 / (1u64 << n) as f64))
}

/// Random paired sample with deliberate ties and zero differences.
pub fn random_pairs(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 * 1.0).collect();
    (a, b)
}
