#ifndef DCI_DCI_HPP_
#define DCI_DCI_HPP_

#include "dci/binning.hpp"
#include "dci/cholesky.hpp"
#include "dci/config.hpp"
#include "dci/core.hpp"
#include "dci/density.hpp"
#include "dci/edf.hpp"
#include "dci/experiments.hpp"
#include "dci/io.hpp"
#include "dci/kmeans.hpp"
#include "dci/models.hpp"
#include "dci/parallel.hpp"
#include "dci/qp_assembly.hpp"
#include "dci/qp_solver.hpp"

#endif // DCI_DCI_HPP_
