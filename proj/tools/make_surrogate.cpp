// Writes the deterministic surrogate student-mat.csv / student-por.csv.
#include <cstdint>
#include <iostream>

#include <CLI11.hpp>

#include "deanchor/error.hpp"
#include "deanchor/surrogate.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Generate UCI-schema surrogate student performance files"};
    std::string out = "data/surrogate";
    std::uint64_t seed = 20210521;
    app.add_option("--out", out, "Output directory")->capture_default_str();
    app.add_option("--seed", seed, "Generator seed")->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    try {
        deanchor::data::write_surrogate_files(out, seed);
    } catch (const deanchor::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::cout << "wrote " << out << "/student-mat.csv and student-por.csv\n";
    return 0;
}
