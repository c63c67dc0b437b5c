macro_rules! example {
    ($name:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $name() {
            $name::run_example().expect(concat!($file, " should run"));
        }
    };
}

example!(parse_and_split, "parse_and_split.rs");
example!(nmf_baseline, "nmf_baseline.rs");
example!(corating_graph, "corating_graph.rs");
example!(attention_forward, "attention_forward.rs");
example!(gradient_check, "gradient_check.rs");
example!(train_and_checkpoint, "train_and_checkpoint.rs");
example!(crossval, "crossval.rs");
