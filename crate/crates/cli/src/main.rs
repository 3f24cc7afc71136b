fn main() {
    std::process::exit(gridmesh_cli::main_with(std::env::args_os()));
}
