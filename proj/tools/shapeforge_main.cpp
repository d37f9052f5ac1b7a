#include "shapeforge/cli.hpp"

int main(int argc, char** argv) {
    return shapeforge::run_command({argv + 1, argv + argc});
}
