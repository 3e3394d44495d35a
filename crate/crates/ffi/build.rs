fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    let header = std::path::Path::new(&crate_dir).join("include/stackmix.h");
    let mut enumeration = cbindgen::EnumConfig::default();
    enumeration.prefix_with_name = true;
    let config = cbindgen::Config {
        enumeration,
        language: cbindgen::Language::C,
        include_guard: Some("STACKMIX_H".into()),
        cpp_compat: true,
        documentation: true,
        ..Default::default()
    };
    match cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(header);
        }
        // Never fail the build over header generation; the checked-in
        // header stays usable.
        Err(e) => println!("cargo:warning=cbindgen failed: {e}"),
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
}
