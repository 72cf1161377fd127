// Command-line front end of the morphcolor pipeline.

#include <exception>
#include <iostream>

#include "morphcolor/cli.hpp"

int main(int argc, char** argv) {
    using namespace morphcolor;
    try {
        const CliParse cli = parse_cli(argc, argv);
        if (cli.help_requested) {
            std::cout << cli.help_text;
            return 0;
        }
        run_pipeline(cli.config, std::cerr);
        return 0;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 64;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const FieldSizeError& e) {
        std::cerr << "size error: " << e.what() << "\n";
        return 3;
    } catch (const SolverDivergenceError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 4;
    } catch (const NonDiffeomorphicStepError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 4;
    } catch (const DegenerateInputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
