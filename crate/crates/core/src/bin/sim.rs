fn main() {
    let env_seed = std::env::var("SIM_SEED").ok();
    let code = beliefsim::cli::main_with_args(std::env::args_os(), env_seed.as_deref());
    std::process::exit(code);
}
