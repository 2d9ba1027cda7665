#ifndef PBNN_THRESHOLDS_HPP
#define PBNN_THRESHOLDS_HPP

namespace pbnn::exp::thresholds {

// Pass bars shared by `pbnn-cim ... --check` and the acceptance suite.

inline constexpr double kTrainEpoch5Acc = 0.970;
inline constexpr double kTrainEpoch20Acc = 0.978;

inline constexpr double kVariationQuarterDrop = 0.015;  // at sigma_w = 0.25
inline constexpr double kVariationHalfPbnnAcc = 0.88;   // at sigma_w = 0.50
inline constexpr double kVariationHalfGap = 0.10;       // PBNN - BNN at 0.50

inline constexpr double kHardwareS10Acc = 0.970;
inline constexpr double kHardwareS5Acc = 0.960;

inline constexpr double kWeightStdLow = 0.05;   // mean weight std at S = 10
inline constexpr double kWeightStdHigh = 0.09;
inline constexpr double kWeightStdAnalyticTol = 0.005;

inline constexpr double kConv1ErrorLow = 0.010;   // digit-"1" CONV-1 at S = 10
inline constexpr double kConv1ErrorHigh = 0.025;
inline constexpr double kLayerErrorCap = 0.10;

inline constexpr double kDeviceAnchorProb = 0.216;  // at 0.5 V
inline constexpr double kDeviceAnchorTol = 1e-6;
inline constexpr double kRPLowOhm = 10.0e3;
inline constexpr double kRPHighOhm = 11.5e3;

inline constexpr long long kCanonicalBitOps = 5'677'632;
inline constexpr long long kCanonicalParameters = 432'576;
inline constexpr double kLeNetBitOps = 395e6;
inline constexpr double kOpRatioLow = 6.8;
inline constexpr double kOpRatioHigh = 7.1;

}  // namespace pbnn::exp::thresholds

#endif
