#include <cstdio>
int main() { std::puts("chamber: pipeline CLI (under construction)"); return 0; }
