#include <string>
#include <vector>

#include "evcast/cli_app.hpp"

int main(int argc, char** argv) {
    return evcast::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
