#include <cstdio>
int main() { std::puts("optiview: not wired yet"); return 0; }
