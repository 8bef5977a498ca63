#pragma once

#include "pld/bench.hpp"
#include "pld/camera.hpp"
#include "pld/error.hpp"
#include "pld/evaluation.hpp"
#include "pld/image.hpp"
#include "pld/inference.hpp"
#include "pld/io/calibration.hpp"
#include "pld/io/cloud_io.hpp"
#include "pld/io/image_io.hpp"
#include "pld/io/report.hpp"
#include "pld/io/split.hpp"
#include "pld/io/weights_io.hpp"
#include "pld/loss.hpp"
#include "pld/network.hpp"
#include "pld/optimizer.hpp"
#include "pld/sampling.hpp"
#include "pld/synthetic.hpp"
