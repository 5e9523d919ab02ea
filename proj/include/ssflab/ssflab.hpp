#pragma once

#include "ssflab/errors.hpp"
#include "ssflab/potential.hpp"
#include "ssflab/transfer.hpp"
#include "ssflab/pruefer.hpp"
#include "ssflab/quadrature.hpp"
#include "ssflab/birman_schwinger.hpp"
#include "ssflab/resonance.hpp"
#include "ssflab/spectral_flow.hpp"
#include "ssflab/shooting.hpp"
#include "ssflab/io.hpp"
#include "ssflab/manifest.hpp"
