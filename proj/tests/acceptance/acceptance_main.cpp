#include <cstdio>
int main(){ std::puts("acceptance suite not yet wired"); return 1; }
