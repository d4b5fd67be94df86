//! Named experiment presets: the tuned synthetic linear-model comparison,
//! one preset per algorithm. Each preset is an ordinary assignment layer,
//! so flags and config files override preset values like any other.

/// All preset names, in display order.
pub const PRESET_NAMES: &[&str] = &[
    "syn-linear-docom",
    "syn-linear-choco",
    "syn-linear-dsgd",
    "syn-linear-gnsd",
    "syn-linear-gt-hsgd",
];

/// The shared experimental setup: 25 agents on a ring, the synthetic
/// multi-class sigmoid problem with its skewed default partition, 3000
/// iterations, metrics every 10.
fn common() -> Vec<(String, String)> {
    [
        ("problem", "sigmoid"),
        ("topology", "ring"),
        ("n", "25"),
        ("iters", "3000"),
        ("stride", "10"),
        ("seed", "1"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Returns the assignment layer for a named preset, or None if the name is
/// unknown.
pub fn preset(name: &str) -> Option<Vec<(String, String)>> {
    let specific: &[(&str, &str)] = match name {
        "syn-linear-docom" => &[
            ("algo", "docom"),
            ("eta", "0.01"),
            ("gamma", "0.15"),
            ("beta", "0.01"),
            ("compressor", "top_k:0.05"),
            ("batch", "2"),
            ("b0", "full"),
        ],
        "syn-linear-choco" => &[
            ("algo", "choco"),
            ("eta", "0.01"),
            ("gamma", "0.32"),
            ("compressor", "top_k:0.1"),
            ("batch", "4"),
        ],
        "syn-linear-dsgd" => &[
            ("algo", "dsgd"),
            ("eta", "0.01"),
            ("compressor", "identity"),
            ("batch", "4"),
        ],
        "syn-linear-gnsd" => &[
            ("algo", "gnsd"),
            ("eta", "0.01"),
            ("beta", "1.0"),
            ("compressor", "identity"),
            ("batch", "4"),
        ],
        "syn-linear-gt-hsgd" => &[
            ("algo", "gt_hsgd"),
            ("eta", "0.01"),
            ("beta", "0.01"),
            ("compressor", "identity"),
            ("batch", "2"),
            ("b0", "full"),
        ],
        _ => return None,
    };
    let mut layer = common();
    layer.extend(specific.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    Some(layer)
}

/// Human-readable listing for `preset list`.
pub fn describe_all() -> String {
    let mut out = String::new();
    for name in PRESET_NAMES {
        out.push_str(name);
        out.push('\n');
        for (key, value) in preset(name).unwrap() {
            out.push_str(&format!("  {key} = {value}\n"));
        }
    }
    out
}
