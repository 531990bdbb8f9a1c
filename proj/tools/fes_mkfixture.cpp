// Writes a synthetic dataset directory in the layout the loader expects, so
// every CLI verb can be exercised end to end without the real measurement
// logs.

#include "fes/dataset.hpp"
#include "fes/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic QoS dataset directory"};
  std::string out;
  fes::SynthSpec spec;
  bool no_contexts = false;
  app.add_option("--out", out, "Target directory")->required();
  app.add_option("--users", spec.n_users, "Number of users");
  app.add_option("--services", spec.n_services, "Number of services");
  app.add_option("--sites", spec.n_sites, "Number of geographic sites");
  app.add_option("--density", spec.density, "Fraction of observed cells");
  app.add_option("--noise", spec.noise, "Multiplicative noise amplitude");
  app.add_option("--seed", spec.seed, "Seed");
  app.add_flag("--no-contexts", no_contexts, "Omit the location files");
  CLI11_PARSE(app, argc, argv);

  try {
    spec.with_contexts = !no_contexts;
    const fes::DatasetBundle b = fes::make_synthetic(spec);
    std::filesystem::create_directories(out);
    const std::filesystem::path dir(out);
    fes::write_matrix_file(dir / "rtMatrix.txt", b.matrix.values);
    if (b.has_contexts()) {
      fes::write_context_file(dir / "users.txt", b.user_contexts);
      fes::write_context_file(dir / "services.txt", b.service_contexts);
    }
    std::printf("wrote %lldx%lld dataset (density %.3f) to %s\n",
                static_cast<long long>(b.matrix.n_users()),
                static_cast<long long>(b.matrix.n_services()), b.matrix.density(),
                out.c_str());
    return 0;
  } catch (const fes::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
