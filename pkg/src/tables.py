"""Embedded reference datasets as CSV text."""

COMPRESSIBLE_INVARIANTS_50 = """\
I1,I2,J
3.0,3.0,1.0
3.095,3.186,1.045
2.721,2.372,0.817
3.209,3.326,1.048
2.494,2.01,0.723
3.089,3.069,0.983
2.968,2.828,0.923
3.016,2.964,0.97
3.399,3.839,1.201
3.289,3.603,1.147
3.458,3.92,1.204
2.866,2.714,0.921
3.366,3.696,1.154
3.432,3.855,1.193
2.759,2.52,0.873
2.649,2.253,0.781
3.5,4.081,1.259
2.876,2.649,0.883
3.432,3.924,1.223
3.555,4.152,1.261
3.194,3.322,1.064
3.391,3.759,1.163
2.568,2.126,0.754
3.466,4.002,1.241
3.248,3.516,1.126
2.961,2.882,0.962
3.297,3.54,1.116
3.072,3.069,1.002
2.921,2.737,0.902
3.152,3.199,1.016
2.634,2.313,0.822
3.136,3.201,1.034
3.25,3.421,1.073
3.14,3.286,1.071
3.047,3.095,1.024
3.604,4.323,1.314
2.796,2.494,0.846
3.225,3.419,1.093
3.329,3.67,1.158
2.917,2.835,0.958
3.49,4.005,1.227
2.817,2.644,0.909
3.547,4.193,1.285
3.18,3.37,1.091
3.321,3.59,1.119
3.361,3.764,1.185
2.703,2.434,0.855
2.443,1.981,0.73
3.528,4.086,1.248
3.583,4.24,1.287
"""

TRELOAR_20C = """\
mode,lambda_or_gamma,P
UT,1,0
UT,1.01,0
UT,1.13,0.14
UT,1.23,0.24
UT,1.41,0.33
UT,1.61,0.43
UT,1.89,0.52
UT,2.17,0.59
UT,2.45,0.68
UT,3.06,0.87
UT,3.62,1.06
UT,4.06,1.24
UT,4.82,1.6
UT,5.41,1.95
UT,5.79,2.3
UT,6.23,2.68
UT,6.46,3.03
UT,6.67,3.4
UT,6.96,3.78
UT,7.14,4.16
UT,7.25,4.49
UT,7.36,4.86
UT,7.49,5.24
UT,7.6,5.6
UT,7.69,6.33
ET,1,0
ET,1.04,0.09
ET,1.08,0.16
ET,1.12,0.24
ET,1.15,0.26
ET,1.21,0.33
ET,1.32,0.44
ET,1.43,0.51
ET,1.7,0.66
ET,1.95,0.77
ET,2.5,0.97
ET,3.04,1.26
ET,3.44,1.47
ET,3.76,1.73
ET,4.03,1.97
ET,4.26,2.23
ET,4.45,2.45
PS,1,0
PS,1.05,0.06
PS,1.13,0.16
PS,1.2,0.24
PS,1.33,0.33
PS,1.45,0.42
PS,1.86,0.59
PS,2.4,0.77
PS,2.99,0.95
PS,3.5,1.13
PS,3.98,1.29
PS,4.39,1.48
PS,4.72,1.65
PS,4.99,1.82
"""

TRELOAR_50C = """\
mode,lambda_or_gamma,P
UT,1,0
UT,1.11,0.17
UT,1.23,0.29
UT,1.57,0.54
UT,2.12,0.8
UT,2.73,1.03
UT,3.36,1.3
UT,3.95,1.57
UT,4.39,1.79
UT,5.29,2.29
UT,6.11,2.8
UT,6.54,3.75
UT,6.95,5.27
UT,7.43,7.73
UT,7.76,10.21
ET,1,0
ET,1.02,0.15
ET,1.08,0.3
ET,1.16,0.48
ET,1.37,0.74
ET,1.57,0.92
ET,1.96,1.17
ET,2.46,1.49
ET,2.79,1.78
ET,3.14,2.04
ET,3.45,2.33
ET,3.6,2.53
ET,3.86,2.96
ET,4.11,3.24
ET,4.6,4.24
ET,5.06,6.15
ET,5.28,6.99
ET,5.42,8.18
ET,5.59,9.87
ET,5.67,11.59
PS,1,0
PS,1.04,0.17
PS,1.23,0.4
PS,1.48,0.63
PS,2.52,1.03
PS,3.51,1.49
PS,4.33,1.9
PS,5.07,2.36
PS,5.74,2.74
PS,6.24,3.22
PS,6.36,3.63
PS,6.65,4.49
PS,6.91,5.34
PS,7.06,6.23
PS,7.26,7
PS,7.42,7.89
PS,7.56,9.18
PS,7.83,10.9
"""

CORTEX = """\
mode,lambda_or_gamma,P
UT,1,0
UT,1.0063,0.0251
UT,1.0125,0.0462
UT,1.0188,0.0666
UT,1.025,0.0838
UT,1.0312,0.101
UT,1.0375,0.1175
UT,1.0437,0.1324
UT,1.05,0.1488
UT,1.0562,0.1661
UT,1.0625,0.1856
UT,1.0688,0.2091
UT,1.075,0.2366
UT,1.0813,0.271
UT,1.0875,0.3125
UT,1.0938,0.365
UT,1.1,0.4151
UC,1,0
UC,0.9938,-0.0308
UC,0.9875,-0.0659
UC,0.9812,-0.104
UC,0.975,-0.1479
UC,0.9688,-0.1908
UC,0.9625,-0.2375
UC,0.9563,-0.292
UC,0.95,-0.3504
UC,0.9437,-0.4127
UC,0.9375,-0.4866
UC,0.9313,-0.5684
UC,0.925,-0.6579
UC,0.9187,-0.763
UC,0.9125,-0.8837
UC,0.9062,-1.0005
UC,0.9,-1.1484
SS,0,0
SS,0.0125,0.0147
SS,0.025,0.0294
SS,0.0375,0.0486
SS,0.05,0.0633
SS,0.0625,0.0814
SS,0.075,0.0983
SS,0.0875,0.1186
SS,0.1,0.1412
SS,0.1125,0.1649
SS,0.125,0.1942
SS,0.1375,0.2292
SS,0.15,0.2698
SS,0.1625,0.3227
SS,0.175,0.3791
SS,0.1875,0.4557
SS,0.2,0.5435
"""

CORONA_RADIATA = """\
mode,lambda_or_gamma,P
UT,1,0
UT,1.0063,0.0157
UT,1.0125,0.0235
UT,1.0188,0.0345
UT,1.025,0.0423
UT,1.0312,0.0509
UT,1.0375,0.0572
UT,1.0437,0.0642
UT,1.05,0.0721
UT,1.0562,0.0791
UT,1.0625,0.0869
UT,1.0688,0.094
UT,1.075,0.105
UT,1.0813,0.1151
UT,1.0875,0.1292
UT,1.0938,0.1418
UT,1.1,0.1582
UC,1,0
UC,0.9938,-0.0193
UC,0.9875,-0.0387
UC,0.9812,-0.0543
UC,0.975,-0.08
UC,0.9688,-0.104
UC,0.9625,-0.1305
UC,0.9563,-0.1674
UC,0.95,-0.2024
UC,0.9437,-0.2453
UC,0.9375,-0.2959
UC,0.9313,-0.3543
UC,0.925,-0.4127
UC,0.9187,-0.4827
UC,0.9125,-0.5723
UC,0.9062,-0.6657
UC,0.9,-0.7591
SS,0,0
SS,0.0125,0.0079
SS,0.025,0.0159
SS,0.0375,0.0238
SS,0.05,0.0318
SS,0.0625,0.0409
SS,0.075,0.0488
SS,0.0875,0.0601
SS,0.1,0.0681
SS,0.1125,0.0817
SS,0.125,0.0964
SS,0.1375,0.1133
SS,0.15,0.1347
SS,0.1625,0.1596
SS,0.175,0.1878
SS,0.1875,0.2227
SS,0.2,0.2611
"""

MIDBRAIN_1 = """\
mode,lambda_or_gamma,P
UT,0.85,-1002.346
UT,0.855,-958.358
UT,0.86,-859.824
UT,0.865,-778.886
UT,0.87,-708.504
UT,0.875,-637.243
UT,0.88,-569.501
UT,0.885,-501.76
UT,0.89,-443.695
UT,0.895,-419.062
UT,0.9,-387.39
UT,0.905,-343.402
UT,0.91,-293.255
UT,0.916,-252.786
UT,0.921,-224.633
UT,0.926,-209.677
UT,0.931,-192.082
UT,0.936,-170.088
UT,0.941,-139.296
UT,0.946,-113.783
UT,0.951,-91.789
UT,0.956,-90.909
UT,0.961,-80.352
UT,0.966,-58.358
UT,0.971,-44.282
UT,0.976,-25.806
UT,0.981,-24.927
UT,0.986,-21.408
UT,0.992,-9.091
UT,0.997,-1.173
UT,1.001,0.587
UT,1.007,1.466
UT,1.012,2.346
UT,1.017,3.226
UT,1.022,4.106
UT,1.027,4.106
UT,1.032,15.543
UT,1.037,19.941
UT,1.042,20.821
UT,1.047,23.46
UT,1.052,32.258
UT,1.058,32.258
UT,1.063,32.258
UT,1.068,33.138
UT,1.073,37.537
UT,1.078,48.094
UT,1.083,52.493
UT,1.088,53.372
UT,1.093,55.132
UT,1.098,56.012
UT,1.103,56.012
UT,1.108,56.891
UT,1.113,57.771
UT,1.118,57.771
UT,1.123,62.17
UT,1.128,64.809
UT,1.133,64.809
UT,1.138,65.689
UT,1.143,65.689
UT,1.149,69.208
ST,-0.325,-182.192
ST,-0.315,-169.521
ST,-0.305,-155.479
ST,-0.295,-142.808
ST,-0.284,-131.164
ST,-0.274,-119.178
ST,-0.264,-109.247
ST,-0.254,-100.0
ST,-0.244,-91.096
ST,-0.233,-82.877
ST,-0.223,-75.342
ST,-0.213,-69.178
ST,-0.203,-63.014
ST,-0.193,-57.192
ST,-0.183,-52.397
ST,-0.173,-47.945
ST,-0.162,-42.123
ST,-0.153,-38.356
ST,-0.142,-34.589
ST,-0.132,-30.822
ST,-0.122,-27.397
ST,-0.112,-24.315
ST,-0.101,-21.575
ST,-0.092,-18.493
ST,-0.081,-16.096
ST,-0.071,-14.041
ST,-0.061,-11.986
ST,-0.051,-9.932
ST,-0.041,-7.534
ST,-0.03,-5.822
ST,-0.02,-3.082
ST,-0.01,-1.027
ST,0.0,0.0
ST,0.01,3.425
ST,0.02,5.479
ST,0.03,7.534
ST,0.041,10.274
ST,0.05,13.356
ST,0.061,16.438
ST,0.071,19.178
ST,0.081,22.603
ST,0.091,26.37
ST,0.102,30.137
ST,0.112,34.589
ST,0.121,38.699
ST,0.132,43.493
ST,0.142,48.63
ST,0.152,54.11
ST,0.162,60.274
ST,0.173,66.096
ST,0.183,73.288
ST,0.193,80.479
ST,0.203,89.041
ST,0.213,97.603
ST,0.223,107.877
ST,0.234,117.808
ST,0.244,129.11
ST,0.254,141.438
ST,0.265,154.795
ST,0.274,167.466
"""

MIDBRAIN_2 = """\
mode,lambda_or_gamma,P
UT,0.849,-1071.268
UT,0.854,-1035.775
UT,0.859,-944.507
UT,0.864,-857.465
UT,0.869,-782.254
UT,0.874,-714.648
UT,0.879,-647.042
UT,0.884,-584.507
UT,0.889,-525.352
UT,0.895,-478.028
UT,0.9,-429.014
UT,0.905,-384.225
UT,0.91,-341.127
UT,0.915,-305.634
UT,0.92,-272.676
UT,0.925,-237.183
UT,0.93,-205.07
UT,0.936,-174.648
UT,0.941,-155.211
UT,0.946,-138.31
UT,0.951,-123.944
UT,0.956,-108.732
UT,0.961,-91.831
UT,0.966,-78.31
UT,0.971,-67.324
UT,0.976,-60.563
UT,0.981,-50.423
UT,0.986,-36.901
UT,0.992,-18.31
UT,0.997,-5.634
UT,1.002,-3.944
UT,1.007,-3.099
UT,1.012,3.662
UT,1.017,8.732
UT,1.022,11.268
UT,1.027,12.958
UT,1.033,18.028
UT,1.038,23.099
UT,1.043,24.789
UT,1.048,28.169
UT,1.053,29.014
UT,1.058,30.704
UT,1.063,34.93
UT,1.068,37.465
UT,1.073,37.465
UT,1.078,40.0
UT,1.084,40.845
UT,1.089,41.69
UT,1.094,46.761
UT,1.099,47.606
UT,1.104,49.296
UT,1.109,49.296
UT,1.114,50.141
UT,1.119,51.831
UT,1.125,56.056
UT,1.129,56.901
UT,1.135,56.901
UT,1.14,56.901
UT,1.145,60.282
UT,1.15,62.817
ST,-0.354,-89.688
ST,-0.344,-82.344
ST,-0.334,-76.558
ST,-0.323,-71.662
ST,-0.314,-67.433
ST,-0.303,-63.427
ST,-0.293,-59.421
ST,-0.283,-55.638
ST,-0.273,-52.522
ST,-0.262,-49.184
ST,-0.252,-46.068
ST,-0.242,-43.175
ST,-0.232,-40.504
ST,-0.222,-37.611
ST,-0.212,-35.163
ST,-0.201,-32.715
ST,-0.191,-30.267
ST,-0.181,-27.819
ST,-0.171,-25.593
ST,-0.161,-23.591
ST,-0.15,-21.588
ST,-0.141,-20.03
ST,-0.13,-18.027
ST,-0.12,-16.469
ST,-0.11,-14.911
ST,-0.1,-13.798
ST,-0.09,-12.24
ST,-0.08,-11.35
ST,-0.07,-9.57
ST,-0.059,-8.902
ST,-0.049,-6.899
ST,-0.039,-5.341
ST,-0.028,-4.006
ST,-0.018,-2.893
ST,-0.008,-1.558
ST,0.002,-0.223
ST,0.012,1.113
ST,0.022,2.448
ST,0.032,3.783
ST,0.043,5.564
ST,0.052,6.454
ST,0.063,8.457
ST,0.073,10.682
ST,0.083,12.24
ST,0.093,14.466
ST,0.103,16.914
ST,0.113,19.585
ST,0.124,22.033
ST,0.134,24.481
ST,0.144,27.596
ST,0.154,31.157
ST,0.164,34.941
ST,0.175,38.279
ST,0.184,42.062
ST,0.195,46.291
ST,0.205,50.964
ST,0.215,56.083
ST,0.225,61.647
ST,0.236,66.988
ST,0.245,72.774
"""

DRUCKER = """\
pi1,pi2
-1.0783,0.0
-1.0652,-0.2352
-1.0092,-0.4671
-0.8835,-0.6711
-0.7041,-0.8285
-0.5052,-0.9531
-0.2925,-1.0548
-0.0603,-1.1123
0.1789,-1.0916
0.4009,-1.0074
0.6061,-0.8937
0.7982,-0.755
0.9553,-0.5747
1.0447,-0.3524
1.0753,-0.117
1.0753,0.117
1.0447,0.3524
0.9553,0.5747
0.7982,0.755
0.6061,0.8937
0.4009,1.0074
0.1789,1.0916
-0.0603,1.1123
-0.2925,1.0548
-0.5052,0.9531
-0.7041,0.8285
-0.8835,0.6711
-1.0092,0.4671
-1.0652,0.2352
-1.0783,0.0
"""

CAZACU = """\
pi1,pi2
-0.5117,0.0
-0.4844,-0.1052
-0.4155,-0.1906
-0.3325,-0.2514
-0.2557,-0.3008
-0.1823,-0.3443
-0.1063,-0.3858
-0.0231,-0.4273
0.0783,-0.465
0.1875,-0.4682
0.2855,-0.4224
0.3512,-0.333
0.3785,-0.2288
0.3858,-0.1313
0.389,-0.0427
0.389,0.0427
0.3858,0.1313
0.3785,0.2288
0.3512,0.333
0.2855,0.4224
0.1875,0.4682
0.0783,0.465
-0.0231,0.4273
-0.1063,0.3858
-0.1823,0.3443
-0.2557,0.3008
-0.3325,0.2514
-0.4155,0.1906
-0.4844,0.1052
-0.5117,0.0
"""

TRESCA = """\
pi1,pi2
-0.1948,0.0
-0.1774,-0.032
-0.1559,-0.0695
-0.134,-0.1073
-0.1129,-0.1441
-0.0935,-0.17
-0.0536,-0.1698
-0.0113,-0.1698
0.0326,-0.1698
0.074,-0.1698
0.1028,-0.1619
0.1232,-0.1262
0.145,-0.0882
0.1666,-0.0508
0.1878,-0.0139
0.1878,0.0139
0.1666,0.0508
0.145,0.0882
0.1232,0.1262
0.1028,0.1619
0.074,0.1698
0.0326,0.1698
-0.0113,0.1698
-0.0536,0.1698
-0.0935,0.17
-0.1129,0.1441
-0.134,0.1073
-0.1559,0.0695
-0.1774,0.032
-0.1948,0.0
"""

STEEL_40CR3MOV = """\
strain_percent,stress_mpa
0.01,4.76
0.05,80.95
0.08,157.14
0.12,233.33
0.16,309.52
0.2,404.76
0.25,490.48
0.28,576.19
0.33,652.38
0.39,757.14
0.47,866.67
0.55,952.38
0.64,1033.33
0.73,1109.52
0.86,1176.19
0.99,1242.86
1.22,1319.05
1.45,1371.43
1.73,1414.29
1.96,1452.38
2.21,1480.95
2.45,1500.0
2.69,1521.43
2.97,1542.86
3.23,1557.14
3.5,1571.43
3.83,1588.1
4.14,1602.38
4.5,1616.67
4.86,1628.57
5.14,1635.71
5.38,1638.1
5.66,1642.86
5.92,1647.62
6.16,1652.38
6.4,1654.76
6.62,1657.14
6.87,1657.14
7.11,1657.14
7.35,1659.52
7.59,1659.52
7.83,1661.9
"""

STEEL_SS316L = """\
strain_percent,stress_mpa
0.0,0.0
0.04,64.29
0.12,152.38
0.22,202.38
0.41,223.81
0.59,235.71
0.77,242.86
0.97,247.62
1.2,257.14
1.44,264.29
1.68,269.05
1.95,276.19
2.25,283.33
2.55,288.1
2.84,295.24
3.11,297.62
3.37,304.76
3.64,307.14
3.91,311.9
4.19,319.05
4.5,323.81
4.77,328.57
5.05,333.33
5.35,333.33
5.67,342.86
5.98,345.24
6.31,350.0
6.61,354.76
6.9,359.52
7.18,361.9
7.48,366.67
7.77,371.43
"""

STEEL_U71MN = """\
strain_percent,stress_mpa
0.0,0.0
0.21,453.23
0.36,508.06
0.55,533.87
0.74,561.29
0.93,587.1
1.12,611.29
1.31,635.48
1.52,659.68
1.69,680.65
1.89,701.61
2.08,722.58
2.28,740.32
2.47,756.45
2.65,772.58
2.85,787.1
3.05,801.61
3.25,812.9
3.42,824.19
3.62,833.87
3.82,845.16
4.01,851.61
4.19,861.29
4.39,869.35
4.59,875.81
4.79,882.26
4.98,887.1
5.16,891.94
5.36,896.77
5.55,901.61
5.75,904.84
5.95,908.06
"""
