#include "rsdiff/experiment.hpp"
int main() { return 0; }
