use swiden::harness::cli::main_entry;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(main_entry(&args));
}
