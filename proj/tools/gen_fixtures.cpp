// Regenerates the golden files under fixtures/. Run manually after an
// intentional change to a pinned template, then review the diff.
#include <fstream>
#include <iostream>

#include "optiview/scene.hpp"

using namespace optiview::scene;

int main(int argc, char** argv) {
    const std::string dir = argc > 1 ? argv[1] : OPTIVIEW_FIXTURE_DIR;

    SceneSpec canon;
    canon.target = make_procedural_object(0, 42);
    canon.enclosure = make_shelf_enclosure(0.44, 0.90, 0.30, 0.03, 1.1868);
    canon.depth_noise_sigma = 0.0015;
    canon.dropout_rate = 0.05;
    canon.seed = 42;

    const std::string path = dir + "/object_cat0_seed42.json";
    std::ofstream out(path);
    if (!out) {
        std::cerr << "cannot write " << path << "\n";
        return 1;
    }
    out << scene_to_json(canon).dump(2);
    std::cout << "wrote " << path << "\n";
    return 0;
}
