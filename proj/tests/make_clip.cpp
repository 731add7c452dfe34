#include <cstdlib>
#include <iostream>

#include "v2v/image_io.hpp"
#include "v2v/synthetic.hpp"

// Usage: make_clip <dir> <frames> <size>
int main(int argc, char** argv) {
    if (argc != 4) {
        std::cerr << "usage: make_clip <dir> <frames> <size>\n";
        return 2;
    }
    const int frames = std::atoi(argv[2]), size = std::atoi(argv[3]);
    v2v::save_frames(argv[1], v2v::synthetic::translating_video(frames, size, size, 1.0, 0.5));
    return 0;
}
