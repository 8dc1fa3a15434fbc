#include "ghm/cli.hpp"

int main(int argc, char** argv)
{
    return ghm::cli::run(argc, argv);
}
