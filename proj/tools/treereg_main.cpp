#include <cstdio>

int main() {
  std::puts("treereg: CLI not wired yet");
  return 64;
}
