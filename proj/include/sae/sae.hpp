#ifndef SAE_SAE_HPP
#define SAE_SAE_HPP

#include "sae/covariates.hpp"
#include "sae/csv.hpp"
#include "sae/direct_estimation.hpp"
#include "sae/error.hpp"
#include "sae/fay_herriot.hpp"
#include "sae/model_formula.hpp"
#include "sae/pipeline.hpp"
#include "sae/report.hpp"
#include "sae/simulation.hpp"
#include "sae/survey_data.hpp"

#endif // SAE_SAE_HPP
