//! Compiles the code listings of the guide in `book/src` as doc-tests.
//!
//! mdbook cannot link against workspace crates, so each chapter is pulled in
//! here as the docs of an empty module and `cargo test --doc` runs it.

macro_rules! chapters {
    ($($name:ident => $file:literal),* $(,)?) => {
        $(
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            pub mod $name {}
        )*
    };
}

chapters! {
    introduction => "introduction.md",
    quickstart => "quickstart.md",
    dataset => "dataset.md",
    night => "night.md",
    corruption => "corruption.md",
    attention => "attention.md",
    features => "features.md",
    pca_svm => "pca_svm.md",
    metrics => "metrics.md",
    pipeline => "pipeline.md",
    cli => "cli.md",
    formats => "formats.md",
}
