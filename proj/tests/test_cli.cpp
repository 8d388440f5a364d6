#include <catch2/catch_amalgamated.hpp>
#include "rsdiff/experiment.hpp"
