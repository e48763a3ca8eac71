// placeholder; real CLI lands with the training module
int main() { return 0; }
