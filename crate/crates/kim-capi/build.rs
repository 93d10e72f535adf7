fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("manifest dir");
    let out = std::path::Path::new(&crate_dir).join("include").join("kim.h");
    std::fs::create_dir_all(out.parent().unwrap()).expect("create include dir");
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("KIM_CAPI_H".to_string()),
        cpp_compat: true,
        documentation: true,
        header: Some("/* C interface to the kim numerical laboratory. */".to_string()),
        usize_is_size_t: true,
        enumeration: cbindgen::EnumConfig {
            prefix_with_name: true,
            ..Default::default()
        },
        ..cbindgen::Config::default()
    };
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("generate C header")
        .write_to_file(out);
    println!("cargo:rerun-if-changed=src/lib.rs");
}
