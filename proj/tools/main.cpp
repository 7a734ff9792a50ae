#include <iostream>

int main() {
  std::cerr << "error: bad_arguments: no command given\n";
  return 2;
}
