#include "cli.hpp"

int main(int argc, char** argv)
{
    return troughcal::cli::run(argc, argv);
}
