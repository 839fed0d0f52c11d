fn main() {
    std::process::exit(vcloud_mdp::cli::run_cli(std::env::args_os()));
}
