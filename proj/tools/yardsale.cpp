#include <iostream>
#include <string>
#include <vector>

#include "yardsale/cli.hpp"

int main(int argc, char** argv) {
    using namespace yardsale::cli;
    std::vector<std::string> args(argv + 1, argv + argc);
    RunConfig cfg;
    try {
        cfg = parse_config(args);
    } catch (const HelpRequested& help) {
        std::cout << help.text;
        return exit_ok;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\nRun 'yardsale --help' for the option list.\n";
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    }
    return run_pipeline(cfg, std::cout);
}
