use clap::Parser;

fn main() {
    faer::set_global_parallelism(faer::Par::Seq);
    let cli = ar2max::cli::Cli::parse();
    std::process::exit(ar2max::cli::run(cli));
}
