#pragma once

#include "graspkit/calibration.hpp"
#include "graspkit/dataset.hpp"
#include "graspkit/error.hpp"
#include "graspkit/geometry.hpp"
#include "graspkit/grasp_maps.hpp"
#include "graspkit/grasp_net.hpp"
#include "graspkit/hash.hpp"
#include "graspkit/image_io.hpp"
#include "graspkit/kinematics.hpp"
#include "graspkit/manifest.hpp"
#include "graspkit/network_config.hpp"
#include "graspkit/nn/archive.hpp"
#include "graspkit/nn/layers.hpp"
#include "graspkit/nn/optim.hpp"
#include "graspkit/plot.hpp"
#include "graspkit/pose.hpp"
#include "graspkit/tensor.hpp"
#include "graspkit/training.hpp"
#include "graspkit/trajectory.hpp"
#include "graspkit/vq.hpp"
#include "graspkit/vqvae.hpp"
