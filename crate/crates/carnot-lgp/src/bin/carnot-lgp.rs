fn main() { std::process::exit(carnot_lgp::cli::run()); }
