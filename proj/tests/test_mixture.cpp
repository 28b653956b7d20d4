#include <catch2/catch_amalgamated.hpp>
#include "odim/odim.hpp"
