fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("CARGO_MANIFEST_DIR");
    let config_path = std::path::Path::new(&crate_dir).join("cbindgen.toml");
    let out_path = std::path::Path::new(&crate_dir).join("include/drmdp.h");
    std::fs::create_dir_all(out_path.parent().unwrap()).expect("create include dir");

    let config = cbindgen::Config::from_file(&config_path).unwrap_or_default();
    cbindgen::Builder::new()
        .with_config(config)
        .with_crate(&crate_dir)
        .generate()
        .expect("unable to generate bindings")
        .write_to_file(out_path);

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
