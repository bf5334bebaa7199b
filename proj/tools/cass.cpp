#include <iostream>

#include "cass/cli.hpp"
#include "cass/platform.hpp"

int main(int argc, char** argv) {
    cass::configure_allocator();
    return cass::cli::run(argc, argv, std::cout, std::cerr);
}
