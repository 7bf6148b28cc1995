#include <cstdio>

int main() {
  std::fprintf(stderr, "vrn: command-line interface not wired up yet\n");
  return 2;
}
