use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out_dir = PathBuf::from(std::env::var("OUT_DIR")?);
    tonic_build::configure()
        .file_descriptor_set_path(out_dir.join("tracking_descriptor.bin"))
        .type_attribute(".tracking.v1", "#[derive(serde::Serialize, serde::Deserialize)]")
        .compile_protos(&["proto/tracking.proto"], &["proto"])?;
    Ok(())
}
