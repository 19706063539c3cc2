//! Writes the synthetic fixture world as XML for manual pipeline runs.

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "/tmp/demo".into());
    std::fs::create_dir_all(&out).unwrap();
    let world = ovid_core::synth::build_world();
    std::fs::write(format!("{out}/changesets.xml"), world.changesets_xml()).unwrap();
    std::fs::write(format!("{out}/edits.osc"), world.osc_xml()).unwrap();
    println!("wrote {out}/changesets.xml and {out}/edits.osc");
}
