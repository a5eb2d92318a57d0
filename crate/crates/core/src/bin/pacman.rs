fn main() {
    std::process::exit(policy_committee::cli::run(std::env::args_os()));
}
