fn main() {
    std::process::exit(rlink_service::cli::main());
}
