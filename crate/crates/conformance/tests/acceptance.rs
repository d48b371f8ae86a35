fn main() {
    if codeshift_conformance::criteria::run_all() > 0 {
        std::process::exit(1);
    }
}
