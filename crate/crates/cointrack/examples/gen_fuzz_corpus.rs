//! Writes minimal valid seed inputs for every fuzz target into fuzz/corpus/.

use cointrack::config::Config;
use cointrack::mask::{Label, LabelImage};
use cointrack::optimizer::FlowField;
use cointrack::segmenter::ExampleIndex;
use cointrack::synth::SceneSpec;

fn main() {
    let base = std::path::Path::new("fuzz/corpus");

    // config_toml
    let cfg = Config::default().to_toml_string().unwrap();
    std::fs::write(base.join("config_toml/default.toml"), cfg).unwrap();
    std::fs::write(
        base.join("config_toml/partial.toml"),
        "seed = 7\n[optimizer]\niterations = 100\n",
    )
    .unwrap();

    // flow_file
    let flow = FlowField::from_fn(3, 2, |x, y| (x as f32 - 1.0, y as f32 * 0.5));
    flow.write(&base.join("flow_file/small.flow")).unwrap();

    // index_snapshot (framed: u32 header length, header json, body)
    let mut idx = ExampleIndex::new(3);
    idx.add(&[0.5, -1.0, 2.0], Label::Background).unwrap();
    idx.add(&[1.5, 0.25, -0.75], Label::Obverse).unwrap();
    idx.add(&[0.0, 0.0, 1.0], Label::Reverse).unwrap();
    idx.freeze_init();
    let tmp = std::env::temp_dir().join("cointrack-corpus-snap");
    idx.write_snapshot(&tmp).unwrap();
    let header = std::fs::read(tmp.with_extension("json")).unwrap();
    let body = std::fs::read(tmp.with_extension("bin")).unwrap();
    let mut framed = (header.len() as u32).to_le_bytes().to_vec();
    framed.extend_from_slice(&header);
    framed.extend_from_slice(&body);
    std::fs::write(base.join("index_snapshot/small.bin"), framed).unwrap();

    // init_json
    std::fs::write(
        base.join("init_json/basic.json"),
        "{\"obverse_frame\": 0, \"reverse_frame\": 25}",
    )
    .unwrap();

    // results_jsonl
    std::fs::write(
        base.join("results_jsonl/two_frames.jsonl"),
        concat!(
            "{\"frame\":0,\"mode\":\"tracking\",\"side\":\"obverse\",\"score\":{\"obj\":0.9,\"cover\":0.9,\"occl\":1.0,\"appearance\":0.8,\"total\":0.648},\"homography\":[1.0,0.0,3.0,0.0,1.0,-2.0,0.0,0.0,1.0],\"adaptation\":{\"bg\":0,\"obj\":0},\"mask_path\":\"masks/000000.png\"}\n",
            "{\"frame\":1,\"mode\":\"lost\",\"side\":\"reverse\",\"score\":{\"obj\":0.0,\"cover\":0.0,\"occl\":0.0,\"appearance\":0.5,\"total\":0.0},\"homography\":null,\"adaptation\":{\"bg\":0,\"obj\":0},\"mask_path\":\"masks/000001.png\"}\n",
        ),
    )
    .unwrap();

    // scene_spec_json
    let spec = serde_json::to_string_pretty(&SceneSpec::default()).unwrap();
    std::fs::write(base.join("scene_spec_json/default.json"), spec).unwrap();

    // label_mask_png
    let mut img = LabelImage::new(8, 6);
    img.set(2, 2, Label::Obverse);
    img.set(5, 3, Label::Reverse);
    cointrack::mask::write_label_png(&base.join("label_mask_png/small.png"), &img).unwrap();

    println!("corpus written");
}
